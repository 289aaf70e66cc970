#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace uvs {

// Answer token attached to a finished path. kInvalidAnswer marks a generation
// that terminated without a usable answer; it never matches a ground truth.
using AnswerToken = std::int64_t;
inline constexpr AnswerToken kInvalidAnswer = -1;

// A question id plus an ordered list of step tokens, optionally terminated by
// an answer. A path is complete exactly when it carries an answer.
struct PartialPath {
  std::string question_id;
  std::vector<int> steps;
  std::optional<AnswerToken> answer;

  bool complete() const { return answer.has_value(); }
  int step_count() const { return static_cast<int>(steps.size()); }

  PartialPath with_step(int token) const {
    PartialPath p = *this;
    p.steps.push_back(token);
    return p;
  }
  PartialPath with_answer(AnswerToken a) const {
    PartialPath p = *this;
    p.answer = a;
    return p;
  }

  bool operator==(const PartialPath& o) const = default;
};

// A complete path (steps followed by an answer).
using SolutionPath = PartialPath;

inline PartialPath make_root(std::string question_id) {
  return PartialPath{std::move(question_id), {}, std::nullopt};
}

}  // namespace uvs
