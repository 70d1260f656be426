#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace spectral {

/// Byte-level parse failure in one of the file loaders.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string &what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  [[nodiscard]] std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t offset_;
};

/// A model or experiment configuration that cannot be realized.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Parameter budget cannot be met within tolerance.
class InfeasibleBudget : public ConfigError {
public:
  InfeasibleBudget(const std::string &what, std::vector<std::size_t> nearest)
      : ConfigError(what), nearest_(std::move(nearest)) {}

  [[nodiscard]] const std::vector<std::size_t> &nearest() const noexcept { return nearest_; }

private:
  std::vector<std::size_t> nearest_;
};

/// A layer violated its forward/backward contract (e.g. non-deterministic output).
class ContractViolation : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// Training produced a non-finite loss.
class DivergedRun : public std::runtime_error {
public:
  explicit DivergedRun(std::size_t epoch)
      : std::runtime_error("training diverged (non-finite loss) in epoch " + std::to_string(epoch)),
        epoch_(epoch) {}

  [[nodiscard]] std::size_t epoch() const noexcept { return epoch_; }

private:
  std::size_t epoch_;
};

/// Class missing from a training split.
class SplitError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace spectral
