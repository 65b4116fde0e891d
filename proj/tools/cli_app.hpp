#pragma once

/// Entry point shared by the `irfs` binary and the CLI tests.
/// Exit codes: 0 ok, 1 usage, 2 config/data error, 3 checkpoint error,
/// 4 numerical abort.
int run_cli(int argc, const char* const* argv);
