#include "lightcone/binary_io.hpp"

#include "lightcone/error.hpp"

#include <bit>
#include <fstream>
#include <iterator>

namespace lightcone::io {

namespace {
constexpr std::string_view kCheckpointMagic = "LCCK";
}

void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::uint64_t BinaryReader::get(int n) {
    if (remaining() < static_cast<std::size_t>(n)) throw FormatError("truncated binary data");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
}

std::span<const std::uint8_t> BinaryReader::bytes(std::size_t n) {
    if (remaining() < n) throw FormatError("truncated binary data");
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
}

std::string BinaryReader::raw(std::size_t n) {
    auto b = bytes(n);
    return std::string(b.begin(), b.end());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string() + " for reading");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + path.string());
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

const ad::Tensor& Checkpoint::tensor(std::string_view name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t.value;
    throw FormatError("checkpoint has no tensor named '" + std::string(name) + "'");
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    BinaryWriter w;
    w.raw(kCheckpointMagic);
    w.u16(kCheckpointVersion);
    w.u16(0);
    w.u64(ckpt.seed);
    w.u64(ckpt.step);
    w.u32(static_cast<std::uint32_t>(ckpt.metadata.size()));
    w.raw(ckpt.metadata);
    w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
        w.u16(static_cast<std::uint16_t>(t.name.size()));
        w.raw(t.name);
        w.u8(2);
        w.u32(static_cast<std::uint32_t>(t.value.rows()));
        w.u32(static_cast<std::uint32_t>(t.value.cols()));
        for (double x : t.value.data()) w.f64(x);
    }
    return w.buffer();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    BinaryReader r(bytes);
    if (r.remaining() < 4 || r.raw(4) != kCheckpointMagic) throw FormatError("not a checkpoint (bad magic)");
    const auto version = r.u16();
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    r.u16();
    Checkpoint c;
    c.seed = r.u64();
    c.step = r.u64();
    c.metadata = r.raw(r.u32());
    const auto count = r.u32();
    for (std::uint32_t k = 0; k < count; ++k) {
        ad::NamedTensor t;
        t.name = r.raw(r.u16());
        const auto rank = r.u8();
        if (rank != 2) throw FormatError("unsupported tensor rank " + std::to_string(rank));
        const std::size_t rows = r.u32();
        const std::size_t cols = r.u32();
        if (r.remaining() / 8 < rows * cols) throw FormatError("truncated tensor data for " + t.name);
        std::vector<double> data(rows * cols);
        for (double& x : data) x = r.f64();
        t.value = ad::Tensor(rows, cols, std::move(data));
        c.tensors.push_back(std::move(t));
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint");
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace lightcone::io
