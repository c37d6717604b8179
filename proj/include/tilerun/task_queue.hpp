#pragma once

#include <atomic>
#include <optional>
#include <type_traits>

#include "tilerun/tiled_matrix.hpp"

namespace tilerun {

// Michael & Scott non-blocking FIFO, unbounded, multi-producer
// multi-consumer.
//
// Dequeued nodes are not freed immediately. They stay chained behind the
// current dummy node and are released by reclaim() (which requires that no
// other thread is inside the queue) or by the destructor. Since no node is
// reused while the queue is live there is no ABA problem and readers never
// touch freed memory.
template <typename T>
class MSQueue {
  static_assert(std::is_trivially_copyable_v<T>, "MSQueue values are copied out racily");

  struct Node {
    T value{};
    std::atomic<Node*> next{nullptr};
  };

 public:
  MSQueue() {
    auto* dummy = new Node;
    first_ = dummy;
    head_.store(dummy, std::memory_order_relaxed);
    tail_.store(dummy, std::memory_order_relaxed);
  }

  ~MSQueue() {
    Node* n = first_;
    while (n) {
      Node* next = n->next.load(std::memory_order_relaxed);
      delete n;
      n = next;
    }
  }

  MSQueue(const MSQueue&) = delete;
  MSQueue& operator=(const MSQueue&) = delete;

  void enqueue(T value) {
    auto* node = new Node;
    node->value = value;
    for (;;) {
      Node* tail = tail_.load(std::memory_order_acquire);
      Node* next = tail->next.load(std::memory_order_acquire);
      if (tail != tail_.load(std::memory_order_acquire)) continue;
      if (next == nullptr) {
        if (tail->next.compare_exchange_weak(next, node, std::memory_order_release,
                                             std::memory_order_relaxed)) {
          tail_.compare_exchange_strong(tail, node, std::memory_order_release,
                                        std::memory_order_relaxed);
          return;
        }
      } else {
        // Tail is lagging; help it along.
        tail_.compare_exchange_strong(tail, next, std::memory_order_release,
                                      std::memory_order_relaxed);
      }
    }
  }

  std::optional<T> dequeue() {
    for (;;) {
      Node* head = head_.load(std::memory_order_acquire);
      Node* tail = tail_.load(std::memory_order_acquire);
      Node* next = head->next.load(std::memory_order_acquire);
      if (head != head_.load(std::memory_order_acquire)) continue;
      if (head == tail) {
        if (next == nullptr) return std::nullopt;
        tail_.compare_exchange_strong(tail, next, std::memory_order_release,
                                      std::memory_order_relaxed);
      } else {
        T value = next->value;
        if (head_.compare_exchange_weak(head, next, std::memory_order_acq_rel,
                                        std::memory_order_relaxed))
          return value;
      }
    }
  }

  // Accurate once all producers and consumers are quiescent.
  bool empty() const {
    return head_.load(std::memory_order_acquire)->next.load(std::memory_order_acquire) == nullptr;
  }

  // Frees nodes already dequeued. Caller guarantees exclusive access.
  void reclaim() {
    Node* head = head_.load(std::memory_order_acquire);
    while (first_ != head) {
      Node* next = first_->next.load(std::memory_order_relaxed);
      delete first_;
      first_ = next;
    }
  }

 private:
  alignas(64) std::atomic<Node*> head_;
  alignas(64) std::atomic<Node*> tail_;
  Node* first_ = nullptr;
};

using TaskQueue = MSQueue<TaskId>;

}  // namespace tilerun
