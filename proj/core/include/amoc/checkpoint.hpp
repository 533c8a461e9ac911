#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "amoc/encoder.hpp"
#include "amoc/nn.hpp"
#include "amoc/tensor.hpp"

namespace amoc {

inline constexpr uint32_t kCheckpointVersion = 1;

// One named float array (parameters, BN buffers, bank rows, optimizer
// slots). Stored on disk as little-endian float32 in declaration order.
struct NamedArray {
    std::string name;
    std::vector<int64_t> shape;
    std::vector<double> values;
};

// Single-file training snapshot: JSON header + raw float32 payload.
struct Checkpoint {
    uint32_t version = kCheckpointVersion;
    EncoderArch arch;
    int num_classes = 0;  // 0 = no classifier head stored
    int epoch = 0;        // epochs completed
    int64_t step = 0;     // optimizer steps completed
    double momentum = 0.999;
    int64_t bank_capacity = 0;  // 0 = no banks stored
    int64_t bank_write_clean = 0;
    int64_t bank_write_adv = 0;
    std::string config_echo;  // resolved config text, verbatim
    std::map<std::string, std::string> rng_states;
    std::vector<NamedArray> arrays;
    std::string fingerprint;  // hex fnv1a64 of the payload bytes

    const NamedArray* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Fingerprint of the packed payload (recomputed and checked on load).
std::string checkpoint_fingerprint(const std::vector<NamedArray>& arrays);

// Capture helpers. Each one rounds the LIVE tensors through float32 while
// copying, so the run that keeps going and the run that reloads this file
// continue from exactly the same numbers. `prefix` disambiguates owners
// (query vs key encoder, optimizer slots).
void capture_tensor(std::vector<NamedArray>& out, const std::string& name, Tensor& live);
void capture_params(std::vector<NamedArray>& out, const std::string& prefix,
                    const std::vector<ParamRef>& params);
void capture_buffers(std::vector<NamedArray>& out, const std::string& prefix,
                     const std::vector<BufferRef>& buffers);

// Restore helpers. Every target is validated (present, shape equal) before
// anything is written -- a mismatched architecture never half-loads.
void restore_tensor(const Checkpoint& ck, const std::string& name, Tensor& live);
void restore_params(const Checkpoint& ck, const std::string& prefix,
                    const std::vector<ParamRef>& params);
void restore_buffers(const Checkpoint& ck, const std::string& prefix,
                     const std::vector<BufferRef>& buffers);

}  // namespace amoc
