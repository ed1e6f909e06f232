#pragma once

namespace mobo {

// Parses argv, dispatches the subcommand, and maps each error class to its
// exit code: 2 argument, 3 shape, 4 format, 5 state, 6 config, 7 io,
// 1 anything else (including a failing grad-check).
int run_cli(int argc, char** argv);

}  // namespace mobo
