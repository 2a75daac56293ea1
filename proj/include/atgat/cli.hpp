// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>

namespace atgat::cli {

/// Entry point of the `atgat` tool:
///   atgat <train|eval|ablate|synth|gradcheck> [--config FILE] [--set KEY=VALUE]... [--out DIR]
/// Returns 0 on success, 1 when a run fails (including a failed gradient
/// check), 2 on usage or configuration errors.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace atgat::cli
