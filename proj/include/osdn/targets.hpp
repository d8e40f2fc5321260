#pragma once

#include "osdn/attack.hpp"
#include "osdn/networks.hpp"

namespace osdn {

/// Attack surface for the open-set classification path: cross-entropy of
/// H(F(x)) against the given labels, parameters frozen and normalization in
/// inference mode. The returned target borrows the model.
AttackTarget classification_target(const OsdnModel& model);

/// Attack surface for the self-supervision path: cross-entropy of T(F(x))
/// against rotation labels.
AttackTarget rotation_target(const OsdnModel& model);

}  // namespace osdn
