#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace volnet {

/// Base error. Carries the pipeline stage that raised it so the CLI can
/// report "<stage>: <cause>".
class Error : public std::runtime_error {
 public:
  Error(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace volnet
