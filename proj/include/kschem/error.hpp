#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kschem {

enum class Errc {
  invalid_domain,
  zero_count,
  invalid_argument,
  dimension_mismatch,
  nonpositive_dt,
  singular_kinetic,
  singular_matrix,
  no_convergence,
  unfitted_normalizer,
  non_finite,
  invalid_state,
  zero_reference,
  nonpositive_error,
  precondition,
  config,
  io,
};

constexpr std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::invalid_domain: return "invalid-domain";
    case Errc::zero_count: return "zero-count";
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::dimension_mismatch: return "dimension-mismatch";
    case Errc::nonpositive_dt: return "nonpositive-dt";
    case Errc::singular_kinetic: return "singular-kinetic";
    case Errc::singular_matrix: return "singular-matrix";
    case Errc::no_convergence: return "no-convergence";
    case Errc::unfitted_normalizer: return "unfitted-normalizer";
    case Errc::non_finite: return "non-finite-encountered";
    case Errc::invalid_state: return "invalid-state";
    case Errc::zero_reference: return "zero-reference";
    case Errc::nonpositive_error: return "nonpositive-error";
    case Errc::precondition: return "precondition";
    case Errc::config: return "config";
    case Errc::io: return "io";
  }
  return "unknown";
}

/// Exception carrying a machine-readable code next to the message.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace kschem
