#pragma once

#include <iosfwd>

namespace sofa {

inline constexpr int k_exit_ok         = 0;
inline constexpr int k_exit_validation = 1;
inline constexpr int k_exit_io         = 2;
inline constexpr int k_exit_usage      = 64;

// Entry point of the `sofa` tool: build | score | analyze | compare | report | all.
int dispatch(int argc, const char * const * argv, std::ostream & out, std::ostream & err);

}  // namespace sofa
