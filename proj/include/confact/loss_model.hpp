#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "confact/errors.hpp"

namespace confact {

using Loss = std::uint64_t;

struct ErrorWeight {
  std::string error_type;
  Loss weight = 0;

  friend bool operator==(const ErrorWeight&, const ErrorWeight&) = default;
};

/// Named error taxonomy with a non-negative integer weight per error type.
///
/// Weights keep their declaration order, which is also the serialization
/// order. Construction validates that at least one type exists and that
/// names are non-empty and unique.
class LossSpec {
 public:
  LossSpec(std::string name, std::vector<ErrorWeight> weights)
      : name_(std::move(name)), weights_(std::move(weights)) {
    if (name_.empty()) throw ConfigError("loss spec name must not be empty");
    if (weights_.empty()) throw ConfigError("loss spec '" + name_ + "' defines no error types");
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      const auto& type = weights_[i].error_type;
      if (type.empty()) throw ConfigError("loss spec '" + name_ + "' has an empty error type name");
      for (std::size_t j = 0; j < i; ++j) {
        if (weights_[j].error_type == type) {
          throw ConfigError("loss spec '" + name_ + "' defines error type '" + type + "' twice");
        }
      }
    }
  }

  const std::string& name() const { return name_; }
  std::span<const ErrorWeight> weights() const { return weights_; }

  std::optional<Loss> weight_of(std::string_view error_type) const {
    for (const auto& w : weights_) {
      if (w.error_type == error_type) return w.weight;
    }
    return std::nullopt;
  }

  bool contains(std::string_view error_type) const { return weight_of(error_type).has_value(); }

  friend bool operator==(const LossSpec&, const LossSpec&) = default;

 private:
  std::string name_;
  std::vector<ErrorWeight> weights_;
};

/// Rater annotation of a single claim. An empty error list marks a correct
/// claim; repeated error types are counted once per occurrence.
struct ClaimAnnotation {
  std::vector<std::string> error_types;
  std::optional<std::string> reasoning;

  friend bool operator==(const ClaimAnnotation&, const ClaimAnnotation&) = default;
};

inline std::vector<std::string> preset_names() { return {"scene", "medical", "document"}; }

inline LossSpec make_preset_loss_spec(std::string_view preset_name) {
  if (preset_name == "scene") {
    return LossSpec("scene", {{"Object", 3},
                              {"Attribute", 1},
                              {"Spatial", 1},
                              {"Interaction", 1},
                              {"Quantitative", 1}});
  }
  if (preset_name == "medical") {
    return LossSpec("medical", {{"Conflicting", 3}, {"Implausible", 2}, {"Plausible", 1}});
  }
  if (preset_name == "document") {
    return LossSpec("document",
                    {{"Numerical", 3}, {"Date", 3}, {"Field", 2}, {"Item", 2}, {"Other", 1}});
  }
  throw ConfigError("unknown loss spec preset '" + std::string(preset_name) +
                    "' (expected scene, medical or document)");
}

// Throws DataError naming the first error type missing from `spec`.
inline void validate_annotation(const ClaimAnnotation& annotation, const LossSpec& spec) {
  for (const auto& type : annotation.error_types) {
    if (!spec.contains(type)) {
      throw DataError("unknown error type '" + type + "' for loss spec '" + spec.name() + "'");
    }
  }
}

inline Loss claim_loss(const ClaimAnnotation& annotation, const LossSpec& spec) {
  Loss total = 0;
  for (const auto& type : annotation.error_types) {
    auto w = spec.weight_of(type);
    if (!w) {
      throw DataError("unknown error type '" + type + "' for loss spec '" + spec.name() + "'");
    }
    total += *w;
  }
  return total;
}

// Cumulative loss of a claim set. The empty set (abstention) costs nothing.
inline Loss response_loss(std::span<const Loss> claim_losses) {
  return std::accumulate(claim_losses.begin(), claim_losses.end(), Loss{0});
}

}  // namespace confact
