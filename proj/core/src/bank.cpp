#include "amoc/bank.hpp"

#include <cmath>

#include "amoc/common.hpp"

namespace amoc {

MemoryBank::MemoryBank(int64_t capacity, int64_t dim, uint64_t seed)
    : capacity_(capacity), dim_(dim) {
    check_arg(capacity > 0 && dim > 0, "memory bank: capacity and dim must be positive");
    storage_ = Tensor({capacity, dim});
    Rng rng = Rng::substream(seed, "bank_init");
    for (int64_t r = 0; r < capacity; ++r) {
        double s;
        do {
            s = 0.0;
            for (int64_t j = 0; j < dim; ++j) {
                double g = rng.normal();
                storage_.at2(r, j) = g;
                s += g * g;
            }
        } while (!(s > 0.0));
        double inv = 1.0 / std::sqrt(s);
        for (int64_t j = 0; j < dim; ++j) storage_.at2(r, j) *= inv;
    }
}

void MemoryBank::enqueue(const Tensor& keys) {
    check_arg(keys.rank() == 2 && keys.shape[1] == dim_, "enqueue: key dim mismatch");
    int64_t B = keys.shape[0];
    check_arg(B <= capacity_, "enqueue: batch exceeds bank capacity");
    for (int64_t i = 0; i < B; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < dim_; ++j) s += keys.at2(i, j) * keys.at2(i, j);
        check_arg(s > 0.0 && std::isfinite(s), "enqueue: key with zero or non-finite norm");
        double inv = 1.0 / std::sqrt(s);
        int64_t row = (write_ptr_ + i) % capacity_;
        for (int64_t j = 0; j < dim_; ++j) storage_.at2(row, j) = keys.at2(i, j) * inv;
    }
    write_ptr_ = (write_ptr_ + B) % capacity_;
}

void MemoryBank::set_write_ptr(int64_t p) {
    check_arg(p >= 0 && p < capacity_, "bank: write pointer out of range");
    write_ptr_ = p;
}

}  // namespace amoc
