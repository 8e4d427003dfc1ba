#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <stdexcept>
#include <vector>

#include "cotdma/time_units.hpp"

namespace cotdma {

enum class EventKind : std::uint8_t {
    Arrival,
    TxStart,
    TxEnd,
    BackoffSlot,
    Timer,
};

// Opaque handle for cancellation.  Generation-checked so a handle to a fired
// or cancelled event can never cancel an unrelated later event reusing the
// same slot.
struct EventHandle {
    std::uint32_t index = 0xFFFFFFFFu;
    std::uint32_t generation = 0;

    bool valid() const { return index != 0xFFFFFFFFu; }
};

// Single-threaded discrete-event executor.  Events fire in nondecreasing
// fire-time order; ties resolve FIFO by a monotone sequence counter.
class EventQueue {
  public:
    TimeNs now() const { return now_; }

    EventHandle schedule(TimeNs fire_time, EventKind kind, int target,
                         std::function<void()> fn) {
        if (fire_time < now_) {
            throw std::invalid_argument("schedule: fire time precedes current time");
        }
        std::uint32_t idx;
        if (!free_.empty()) {
            idx = free_.back();
            free_.pop_back();
        } else {
            idx = static_cast<std::uint32_t>(nodes_.size());
            nodes_.emplace_back();
        }
        Node& n = nodes_[idx];
        n.time = fire_time;
        n.seq = next_seq_++;
        n.kind = kind;
        n.target = target;
        n.fn = std::move(fn);
        n.armed = true;
        ++live_;
        heap_.push(HeapEntry{fire_time, n.seq, idx, n.generation});
        return EventHandle{idx, n.generation};
    }

    EventHandle schedule(TimeNs fire_time, std::function<void()> fn) {
        return schedule(fire_time, EventKind::Timer, -1, std::move(fn));
    }

    // Returns true iff the event was pending and is now guaranteed not to
    // fire.  Cancelling twice, or after the event fired, returns false.
    bool cancel(EventHandle h) {
        if (!h.valid() || h.index >= nodes_.size()) {
            return false;
        }
        Node& n = nodes_[h.index];
        if (!n.armed || n.generation != h.generation) {
            return false;
        }
        release(h.index);
        return true;
    }

    bool pending(EventHandle h) const {
        return h.valid() && h.index < nodes_.size() && nodes_[h.index].armed &&
               nodes_[h.index].generation == h.generation;
    }

    bool empty() const { return live_ == 0; }

    std::size_t pending_count() const { return live_; }

    // Fires every pending event with fire_time <= t_end, then leaves the
    // clock at t_end.  Returns the number of events fired.
    std::size_t run_until(TimeNs t_end) {
        if (t_end < now_) {
            throw std::invalid_argument("run_until: target time precedes current time");
        }
        std::size_t fired = 0;
        while (!heap_.empty()) {
            const HeapEntry top = heap_.top();
            if (top.time > t_end) {
                break;
            }
            heap_.pop();
            Node& n = nodes_[top.index];
            if (!n.armed || n.generation != top.generation) {
                continue; // cancelled; lazily dropped here
            }
            now_ = top.time;
            std::function<void()> fn = std::move(n.fn);
            release(top.index);
            fn();
            ++fired;
        }
        now_ = t_end;
        return fired;
    }

  private:
    struct Node {
        TimeNs time = 0;
        std::uint64_t seq = 0;
        std::uint32_t generation = 0;
        EventKind kind = EventKind::Timer;
        int target = -1;
        std::function<void()> fn;
        bool armed = false;
    };

    struct HeapEntry {
        TimeNs time;
        std::uint64_t seq;
        std::uint32_t index;
        std::uint32_t generation;
        bool operator>(const HeapEntry& o) const {
            if (time != o.time) {
                return time > o.time;
            }
            return seq > o.seq;
        }
    };

    void release(std::uint32_t idx) {
        Node& n = nodes_[idx];
        n.armed = false;
        n.generation++;
        n.fn = nullptr;
        free_.push_back(idx);
        --live_;
    }

    std::vector<Node> nodes_;
    std::vector<std::uint32_t> free_;
    std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<HeapEntry>> heap_;
    TimeNs now_ = 0;
    std::uint64_t next_seq_ = 0;
    std::size_t live_ = 0;
};

} // namespace cotdma
