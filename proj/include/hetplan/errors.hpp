// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace hetplan {

// Invalid user-supplied data: malformed files, schema violations, values out
// of range, references to unknown devices/tasks. Maps to CLI exit code 3.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad invocation (flags, missing arguments, zero budget). CLI exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hetplan
