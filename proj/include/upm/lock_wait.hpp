#pragma once

#include <cstdint>
#include <mutex>

namespace upm {

// Thread-local tally of time spent waiting on engine/memory mutexes.
// The advise path reads deltas of this counter to report lock-wait time
// as its own phase, disjoint from the work phases.
namespace lock_wait {

std::uint64_t thread_total_ns();
void add_ns(std::uint64_t ns);

}  // namespace lock_wait

// lock_guard that charges acquisition wait to the thread-local tally.
class TimedLock {
public:
    explicit TimedLock(std::mutex& m);
    ~TimedLock() { mu_.unlock(); }
    TimedLock(const TimedLock&) = delete;
    TimedLock& operator=(const TimedLock&) = delete;

private:
    std::mutex& mu_;
};

}  // namespace upm
