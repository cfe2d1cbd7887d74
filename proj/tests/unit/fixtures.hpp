#pragma once

#include "levisim/trap.hpp"

namespace levisim::testing {

/// Calibrated default trap, built once per test binary.
inline const acoustics::TrapSetup& default_trap() {
  static const acoustics::TrapSetup setup = acoustics::build_trap(acoustics::FieldConfig{});
  return setup;
}

}  // namespace levisim::testing
