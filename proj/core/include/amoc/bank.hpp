#pragma once

#include <cstdint>

#include "amoc/rng.hpp"
#include "amoc/tensor.hpp"

namespace amoc {

// Fixed-capacity FIFO ring of unit-norm negative keys. The trainer owns two
// of these (clean and adversarial). Keys are plain values — nothing here
// participates in gradients.
class MemoryBank {
public:
    // Fills the bank with seeded random unit vectors; zero keys would make
    // every logit identical, random ones behave like untrained negatives.
    MemoryBank(int64_t capacity, int64_t dim, uint64_t seed);

    // Writes a (B,d) batch of keys at the ring pointer with wraparound.
    // Rows are defensively renormalized; a batch larger than the capacity
    // has no well-defined FIFO meaning and is rejected.
    void enqueue(const Tensor& keys);

    // Stable copy for the duration of a loss computation.
    Tensor negatives() const { return storage_; }

    int64_t capacity() const { return capacity_; }
    int64_t dim() const { return dim_; }
    int64_t write_ptr() const { return write_ptr_; }

    // Checkpoint plumbing: raw access to the ring and pointer.
    Tensor& storage() { return storage_; }
    const Tensor& storage() const { return storage_; }
    void set_write_ptr(int64_t p);

private:
    int64_t capacity_, dim_;
    Tensor storage_;  // (K, d)
    int64_t write_ptr_ = 0;
};

}  // namespace amoc
