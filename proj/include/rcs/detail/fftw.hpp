// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <mutex>

namespace rcs::detail {

/// FFTW's planner is not thread-safe; every plan creation and destruction holds this lock.
std::mutex& fftw_planner_mutex();

}  // namespace rcs::detail
