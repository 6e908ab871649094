#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "confact/errors.hpp"
#include "confact/loss_model.hpp"

namespace confact {

// One decomposed claim. `scores` holds named confidence channels such as
// "logp_image" or "ext_sim"; higher means more likely to be correct.
struct ClaimRecord {
  std::string claim_id;
  std::string text;
  std::map<std::string, double> scores;
  std::optional<ClaimAnnotation> annotation;

  friend bool operator==(const ClaimRecord&, const ClaimRecord&) = default;
};

struct ResponseRecord {
  std::string response_id;
  std::string image_ref;
  std::string prompt;
  std::vector<ClaimRecord> claims;

  friend bool operator==(const ResponseRecord&, const ResponseRecord&) = default;
};

inline double score_of(const ClaimRecord& claim, const std::string& score_field) {
  auto it = claim.scores.find(score_field);
  if (it == claim.scores.end()) {
    throw DataError("claim '" + claim.claim_id + "' has no score field '" + score_field + "'");
  }
  return it->second;
}

inline Loss loss_of(const ClaimRecord& claim, const LossSpec& spec) {
  if (!claim.annotation) {
    throw DataError("claim '" + claim.claim_id + "' is not annotated");
  }
  return claim_loss(*claim.annotation, spec);
}

}  // namespace confact
