#ifndef MFCRL_MFCRL_HPP_
#define MFCRL_MFCRL_HPP_

// Umbrella header.
#include "mfcrl/config.hpp"
#include "mfcrl/errors.hpp"
#include "mfcrl/export.hpp"
#include "mfcrl/geometry.hpp"
#include "mfcrl/hlm.hpp"
#include "mfcrl/learner.hpp"
#include "mfcrl/pipeline.hpp"
#include "mfcrl/policy.hpp"
#include "mfcrl/random.hpp"
#include "mfcrl/sim.hpp"
#include "mfcrl/synthesis.hpp"
#include "mfcrl/verify.hpp"

#endif  // MFCRL_MFCRL_HPP_
