#pragma once

#include "levisim/protocol.hpp"

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>

namespace levisim::server {

struct MailboxStats {
  std::uint64_t received = 0;    // offered messages (decoded)
  std::uint64_t applied = 0;     // taken by the tick loop
  std::uint64_t superseded = 0;  // overwritten in the slot before a tick took them
  std::uint64_t stale = 0;       // sequence not newer than the latest seen
  std::uint64_t malformed = 0;   // failed to decode
  std::size_t max_depth = 0;     // never exceeds 1

  std::uint64_t dropped() const { return superseded + stale + malformed; }
};

/// Single-slot latest-wins channel for messages carrying a `sequence` field.
/// Messages whose sequence is not newer than every message seen so far are
/// dropped as stale, so applied sequence numbers are strictly increasing.
template <class T>
class Mailbox {
 public:
  /// Returns false when the message was dropped as stale.
  bool offer(const T& message) {
    std::lock_guard lock(mutex_);
    ++stats_.received;
    if (have_seen_ && message.sequence <= newest_seq_) {
      ++stats_.stale;
      return false;
    }
    have_seen_ = true;
    newest_seq_ = message.sequence;
    if (slot_) ++stats_.superseded;
    slot_ = message;
    stats_.max_depth = std::max<std::size_t>(stats_.max_depth, 1);
    return true;
  }

  std::optional<T> take() {
    std::lock_guard lock(mutex_);
    std::optional<T> out;
    out.swap(slot_);
    if (out) ++stats_.applied;
    return out;
  }

  void count_malformed() {
    std::lock_guard lock(mutex_);
    ++stats_.malformed;
  }

  std::size_t depth() const {
    std::lock_guard lock(mutex_);
    return slot_ ? 1 : 0;
  }

  MailboxStats stats() const {
    std::lock_guard lock(mutex_);
    return stats_;
  }

 private:
  mutable std::mutex mutex_;
  std::optional<T> slot_;
  bool have_seen_ = false;
  std::uint32_t newest_seq_ = 0;
  MailboxStats stats_;
};

/// Trap-command mailbox fed with raw datagrams.
class CommandIngress : public Mailbox<protocol::TrapCommand> {
 public:
  /// Decodes and offers a datagram. Malformed input is counted and ignored.
  std::optional<protocol::DecodeError> ingest(std::span<const std::byte> datagram) {
    auto decoded = protocol::decode_trap_command(datagram);
    if (!decoded.value) {
      count_malformed();
      return decoded.error;
    }
    offer(*decoded.value);
    return std::nullopt;
  }
};

}  // namespace levisim::server
