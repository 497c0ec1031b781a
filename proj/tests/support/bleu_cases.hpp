#pragma once

#include <string>
#include <vector>

namespace dmt::testing {

struct BleuCase {
  std::string candidate;
  std::vector<std::string> references;
  // Value from an independent Python BLEU implementation. Where that
  // implementation floors a zero n-gram count to the smallest double its
  // result is below 1e-76; those entries are recorded as 0.
  double expected;
};

inline const std::vector<BleuCase>& bleu_cases() {
  static const std::vector<BleuCase> cases{
      {"the the the the the the the", {"the cat is on the mat"}, 0.0},
      {"the cat is on the mat", {"the cat is on the mat"}, 1.0},
      {"the cat sat on the mat", {"the cat is on the mat"}, 0.0},
      {"a b c d e f g h", {"a b c d e f g h"}, 1.0},
      {"a b c d e f g h", {"a b c d x f g h"}, 0.5},
      {"a b c d", {"a b c d e f g h"}, 0.36787944117144233},
      {"a b c d e f g h i j", {"a b c d e f g h"}, 0.75983568565159254},
      {"a b c", {"a b c"}, 0.0},
      {"x y z w", {"a b c d"}, 0.0},
      {"a b c d e", {"a b c d e", "a b c d e f g"}, 1.0},
      {"a b c d e f", {"a b c d e f g h", "a b c d e"}, 1.0},
      {"a b a b a b a b", {"a b a b", "b a b a b a"}, 0.68037493331712018},
      {"one two three four five six", {"one two three four five six seven eight nine"},
       0.60653065971263342},
      {"p q r s t u v", {"p q r s t u v", "p q r x t u v"}, 1.0},
      {"k l m n k l m n", {"k l m n o p"}, 0.345720784641941},
      {"the quick brown fox jumps over the lazy dog",
       {"the quick brown fox jumped over the lazy dog"}, 0.59694917920196455},
      {"a a a a a", {"a a a a a a a"}, 0.67032004603563933},
      {"c d e f g h", {"a b c d e f g h"}, 0.71653131057378927},
      {"m n o p q r s", {"m n o p", "q r s m n o p"}, 0.59460355750136051},
      {"", {"a b c d"}, 0.0},
  };
  return cases;
}

}  // namespace dmt::testing
