// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "kronlora/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "kronlora/errors.hpp"

namespace kronlora {

namespace {

constexpr std::size_t kMaxNameLength = 64;

class ByteWriter {
public:
    explicit ByteWriter(std::size_t reserve) { bytes_.reserve(reserve); }

    void u8(std::uint8_t v) { bytes_.push_back(v); }

    void u32(std::size_t value) {
        if (value > std::numeric_limits<std::uint32_t>::max()) {
            throw Error("checkpoint field " + std::to_string(value) + " exceeds the u32 range");
        }
        const auto v = static_cast<std::uint32_t>(value);
        for (int shift = 0; shift < 32; shift += 8) {
            bytes_.push_back(static_cast<std::uint8_t>(v >> shift));
        }
    }

    void f64(double value) {
        const auto v = std::bit_cast<std::uint64_t>(value);
        for (int shift = 0; shift < 64; shift += 8) {
            bytes_.push_back(static_cast<std::uint8_t>(v >> shift));
        }
    }

    void raw(const char* data, std::size_t n) { bytes_.insert(bytes_.end(), data, data + n); }

    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) {
            throw CorruptionError(std::string("checkpoint truncated while reading ") + what);
        }
        auto out = bytes_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    std::uint8_t u8(const char* what) { return take(1, what)[0]; }

    std::uint32_t u32(const char* what) {
        const auto b = take(4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) {
            v = (v << 8) | b[static_cast<std::size_t>(i)];
        }
        return v;
    }

    double f64(const char* what) {
        const auto b = take(8, what);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) {
            v = (v << 8) | b[static_cast<std::size_t>(i)];
        }
        return std::bit_cast<double>(v);
    }

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

} // namespace

std::size_t checkpoint_size(const AdapterPlan& plan) {
    std::size_t total = kCheckpointHeaderBytes;
    const auto names = parameter_names(plan.kind);
    const auto shapes = parameter_shapes(plan);
    for (std::size_t i = 0; i < names.size(); ++i) {
        total += 4 + names[i].size() + 4 + 4 + 8 * shapes[i].first * shapes[i].second;
    }
    return total;
}

std::vector<std::uint8_t> encode_checkpoint(const Adapter& adapter) {
    validate_adapter(adapter);
    const AdapterPlan& plan = plan_of(adapter);
    const auto params = trainable_parameters(adapter);

    ByteWriter out(checkpoint_size(plan));
    out.raw(kCheckpointMagic.data(), kCheckpointMagic.size());
    out.u8(static_cast<std::uint8_t>(plan.kind));
    for (std::size_t field : {plan.a1, plan.a2, plan.b1, plan.b2, plan.r, plan.d_in, plan.d_out}) {
        out.u32(field);
    }
    out.f64(plan.alpha);
    out.f64(plan.dropout_p);
    out.u32(params.size());
    for (const ConstParamRef& p : params) {
        out.u32(p.name.size());
        out.raw(p.name.data(), p.name.size());
        out.u32(p.value->rows());
        out.u32(p.value->cols());
        for (double v : p.value->data()) {
            out.f64(v);
        }
    }
    return out.take();
}

Adapter decode_checkpoint(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    if (bytes.size() < kCheckpointMagic.size() ||
        !std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes.begin(),
                    [](char c, std::uint8_t b) { return static_cast<std::uint8_t>(c) == b; })) {
        throw FormatError("not a kronlora checkpoint (bad magic)");
    }
    in.take(kCheckpointMagic.size(), "magic");

    const std::uint8_t kind_code = in.u8("kind");
    if (kind_code < 1 || kind_code > 3) {
        throw FormatError("unknown adapter kind code " + std::to_string(kind_code));
    }
    AdapterPlan plan;
    plan.kind = static_cast<AdapterKind>(kind_code);
    plan.a1 = in.u32("a1");
    plan.a2 = in.u32("a2");
    plan.b1 = in.u32("b1");
    plan.b2 = in.u32("b2");
    plan.r = in.u32("r");
    plan.d_in = in.u32("d_in");
    plan.d_out = in.u32("d_out");
    plan.alpha = in.f64("alpha");
    plan.dropout_p = in.f64("dropout_p");
    plan.degenerate_factorization = plan.kind == AdapterKind::KronA && (plan.a1 == 1 || plan.a2 == 1);
    try {
        validate_plan(plan);
    } catch (const PlanningError& e) {
        throw CorruptionError(std::string("checkpoint header: ") + e.what());
    }

    const auto names = parameter_names(plan.kind);
    const auto shapes = parameter_shapes(plan);
    const std::uint32_t count = in.u32("tensor_count");
    if (count != names.size()) {
        throw CorruptionError("checkpoint declares " + std::to_string(count) + " tensors, " +
                              std::string(to_string(plan.kind)) + " needs " + std::to_string(names.size()));
    }
    std::vector<DenseMatrix> tensors;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const std::uint32_t name_len = in.u32("tensor name length");
        if (name_len > kMaxNameLength) {
            throw CorruptionError("tensor name length " + std::to_string(name_len) + " is implausible");
        }
        const auto name_bytes = in.take(name_len, "tensor name");
        const std::string name(name_bytes.begin(), name_bytes.end());
        if (name != names[i]) {
            throw CorruptionError("tensor " + std::to_string(i) + " is '" + name + "', expected '" + names[i] + "'");
        }
        const std::uint32_t rows = in.u32("tensor rows");
        const std::uint32_t cols = in.u32("tensor cols");
        if (rows != shapes[i].first || cols != shapes[i].second) {
            throw CorruptionError("tensor '" + name + "' is " + std::to_string(rows) + "x" + std::to_string(cols) +
                                  ", plan requires " + std::to_string(shapes[i].first) + "x" +
                                  std::to_string(shapes[i].second));
        }
        const std::size_t n = static_cast<std::size_t>(rows) * cols;
        if (in.remaining() / 8 < n) {
            throw CorruptionError("checkpoint truncated in payload of '" + name + "'");
        }
        std::vector<double> values(n);
        for (double& v : values) {
            v = in.f64("tensor payload");
        }
        tensors.emplace_back(rows, cols, std::move(values));
    }
    if (in.remaining() != 0) {
        throw CorruptionError("checkpoint has " + std::to_string(in.remaining()) + " trailing bytes");
    }
    return make_adapter(plan, std::move(tensors));
}

std::size_t save_checkpoint(const Adapter& adapter, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(adapter);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
        throw IoError("write to '" + path.string() + "' failed");
    }
    return bytes.size();
}

Adapter load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw IoError("read from '" + path.string() + "' failed");
    }
    return decode_checkpoint(bytes);
}

} // namespace kronlora
