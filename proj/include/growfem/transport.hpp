#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <thread>
#include <utility>
#include <vector>

#include "growfem/core.hpp"

namespace growfem {

/// Bulk-synchronous in-process transport between parts.
///
/// A superstep runs one callback per part; messages posted with send() during
/// a superstep are delivered after the implicit barrier and read with recv()
/// in a later superstep (or from the orchestrator). Mailboxes are laid out per
/// (from, to) pair, so the callbacks never contend on shared state. Global
/// reductions are performed by the orchestrator over the parts' contributions
/// in ascending part order, which makes every run bit-reproducible regardless
/// of the part count or threading.
class Transport {
 public:
  explicit Transport(int num_parts) : outbox_(make_matrix(num_parts)), inbox_(make_matrix(num_parts)),
                                      nparts_(num_parts) {
    if (num_parts < 1) throw InvalidArgument("Transport: need at least one part");
  }
  virtual ~Transport() = default;

  int parts() const { return nparts_; }

  /// Runs body(p) for every part and delivers posted messages at the barrier.
  void step(const std::function<void(int)>& body) {
    run_parts(body);
    for (int f = 0; f < nparts_; ++f)
      for (int t = 0; t < nparts_; ++t) {
        auto& slot = outbox_[idx(f, t)];
        inbox_[idx(f, t)] = std::move(slot);
        slot.clear();
      }
    ++supersteps_;
  }

  /// Callable from inside a superstep body running as part `from`.
  void send(int from, int to, std::vector<std::byte> payload) {
    outbox_[idx(from, to)].push_back(std::move(payload));
    ++messages_;
  }

  /// Messages delivered to `to` from `from` in the last completed superstep.
  const std::vector<std::vector<std::byte>>& recv(int to, int from) const {
    return inbox_[idx(from, to)];
  }

  // Instrumentation for tests and reports.
  std::size_t supersteps() const { return supersteps_; }
  std::size_t messages() const { return messages_; }
  void reset_counters() {
    supersteps_ = 0;
    messages_ = 0;
  }

 protected:
  virtual void run_parts(const std::function<void(int)>& body) {
    for (int p = 0; p < nparts_; ++p) body(p);
  }

 private:
  using Mailbox = std::vector<std::vector<std::byte>>;
  static std::vector<Mailbox> make_matrix(int n) {
    return std::vector<Mailbox>(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  }
  std::size_t idx(int from, int to) const {
    return static_cast<std::size_t>(from) * static_cast<std::size_t>(nparts_) +
           static_cast<std::size_t>(to);
  }

  std::vector<Mailbox> outbox_;
  std::vector<Mailbox> inbox_;
  int nparts_;
  std::size_t supersteps_ = 0;
  std::size_t messages_ = 0;
};

/// Shared-memory variant: part callbacks of a superstep run on their own
/// threads; the barrier is the join. Mailbox slots are per (from, to), so the
/// bodies stay lock-free.
class ThreadedTransport : public Transport {
 public:
  using Transport::Transport;

 protected:
  void run_parts(const std::function<void(int)>& body) override {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(parts()));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(parts()));
    for (int p = 0; p < parts(); ++p)
      pool.emplace_back([&, p] {
        try {
          body(p);
        } catch (...) {
          errors[static_cast<std::size_t>(p)] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
};

inline std::unique_ptr<Transport> make_transport(const std::string& kind, int parts) {
  if (kind == "serial") return std::make_unique<Transport>(parts);
  if (kind == "threads") return std::make_unique<ThreadedTransport>(parts);
  throw ConfigError("unknown transport kind: " + kind);
}

namespace wire {

/// Trivially-copyable encode/decode helpers for mailbox payloads.
template <class T>
void put(std::vector<std::byte>& buf, const T& v) {
  static_assert(std::is_trivially_copyable_v<T>);
  const std::size_t n = buf.size();
  buf.resize(n + sizeof(T));
  std::memcpy(buf.data() + n, &v, sizeof(T));
}

template <class T>
T get(const std::vector<std::byte>& buf, std::size_t& pos) {
  static_assert(std::is_trivially_copyable_v<T>);
  if (pos + sizeof(T) > buf.size()) throw Error("transport payload underrun");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace wire

}  // namespace growfem
