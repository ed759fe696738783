#pragma once

namespace imu2emg {

/// Process-wide setup for long training runs: keeps large tensor buffers
/// in the heap instead of mapping and unmapping them on every step. Safe
/// to call more than once; a no-op outside glibc.
void configure_process();

}  // namespace imu2emg
