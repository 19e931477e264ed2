// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>

namespace snerv {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;
inline constexpr int kExitInput = 4;

/// Subcommands gen, train, eval, compress, curves, info, ablate. Settings come
/// from an optional `--config` file with [model] [train] [compress] [gen]
/// [data] [ablate] sections; flags override the file. Every run writes
/// `<out>/manifest.json`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace snerv
