#include "ntl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ntl {

namespace {

constexpr char kMagic[4] = {'N', 'T', 'L', 'F'};
constexpr std::uint32_t kVersion = 1;

// Single-machine format; we assume a little-endian host and write raw bytes.
static_assert(std::endian::native == std::endian::little);

template <typename T>
void write_pod(std::ostream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& f) {
    T v;
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw std::runtime_error("checkpoint truncated");
    return v;
}

void write_config(std::ostream& f, const ModelConfig& c) {
    write_pod<std::uint32_t>(f, c.vocab_size);
    write_pod<std::uint32_t>(f, c.context_length);
    write_pod<std::uint32_t>(f, c.d_model);
    write_pod<std::uint32_t>(f, c.n_heads);
    write_pod<std::uint32_t>(f, c.n_layers);
    write_pod<std::uint32_t>(f, c.d_ff);
    write_pod<std::uint64_t>(f, c.seed);
}

ModelConfig read_config(std::istream& f) {
    ModelConfig c;
    c.vocab_size = read_pod<std::uint32_t>(f);
    c.context_length = read_pod<std::uint32_t>(f);
    c.d_model = read_pod<std::uint32_t>(f);
    c.n_heads = read_pod<std::uint32_t>(f);
    c.n_layers = read_pod<std::uint32_t>(f);
    c.d_ff = read_pod<std::uint32_t>(f);
    c.seed = read_pod<std::uint64_t>(f);
    return c;
}

void write_tensors(std::ostream& f, const Parameters<float>& p) {
    for_each_tensor(p, [&](const auto& t) {
        const bool is_vec = t.cols() == 1 && t.RowsAtCompileTime == Eigen::Dynamic &&
                            t.ColsAtCompileTime == 1;
        if (is_vec) {
            write_pod<std::uint32_t>(f, 1);
            write_pod<std::uint64_t>(f, t.rows());
        } else {
            write_pod<std::uint32_t>(f, 2);
            write_pod<std::uint64_t>(f, t.rows());
            write_pod<std::uint64_t>(f, t.cols());
        }
        f.write(reinterpret_cast<const char*>(t.data()), sizeof(float) * t.size());
    });
}

void read_tensors(std::istream& f, Parameters<float>& p) {
    for_each_tensor(p, [&](auto& t) {
        const auto rank = read_pod<std::uint32_t>(f);
        const auto rows = read_pod<std::uint64_t>(f);
        const auto cols = rank == 2 ? read_pod<std::uint64_t>(f) : 1;
        if (rows != static_cast<std::uint64_t>(t.rows()) ||
            cols != static_cast<std::uint64_t>(t.cols()))
            throw std::runtime_error("checkpoint tensor shape mismatch");
        f.read(reinterpret_cast<char*>(t.data()), sizeof(float) * t.size());
        if (!f) throw std::runtime_error("checkpoint truncated");
    });
}

}  // namespace

void save_checkpoint(const Parameters<float>& params, const ModelConfig& config,
                     const std::string& path, const TrainState* train_state) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.write(kMagic, 4);
    write_pod(f, kVersion);
    write_config(f, config);
    write_tensors(f, params);
    write_pod<std::uint8_t>(f, train_state ? 1 : 0);
    if (train_state) {
        write_tensors(f, train_state->adam.m);
        write_tensors(f, train_state->adam.v);
        write_pod<std::int64_t>(f, train_state->adam.t);
        write_pod<std::int64_t>(f, train_state->step);
        write_pod<std::uint64_t>(f, train_state->rng_state.size());
        f.write(train_state->rng_state.data(), train_state->rng_state.size());
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("not a checkpoint file (bad magic)");
    const auto version = read_pod<std::uint32_t>(f);
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    ck.config = read_config(f);
    ck.config.validate();
    ck.params = zeros_like_params<float>(ck.config);
    read_tensors(f, ck.params);
    if (read_pod<std::uint8_t>(f)) {
        TrainState ts;
        ts.adam = AdamState<float>::init(ck.config);
        read_tensors(f, ts.adam.m);
        read_tensors(f, ts.adam.v);
        ts.adam.t = read_pod<std::int64_t>(f);
        ts.step = read_pod<std::int64_t>(f);
        const auto len = read_pod<std::uint64_t>(f);
        ts.rng_state.resize(len);
        f.read(ts.rng_state.data(), len);
        if (!f) throw std::runtime_error("checkpoint truncated");
        ck.train_state = std::move(ts);
    }
    return ck;
}

}  // namespace ntl
