#pragma once

// Bit-exact persistence: binary PGM (P5, maxval 255) image I/O, the dataset
// directory layout (root/{source,mask,gt}/NNNNNN.pgm), and the MRN1 model
// checkpoint format. Parsers are total: they either return a fully parsed
// value or throw naming the offending field; nothing partial escapes.
//
// Checkpoint layout (all integers little-endian):
//   "MRN1" | u32 version=1 | u32 levels | u32 base_channels |
//   u32 source_channels | f32 threshold | tensors in canonical order,
//   each as u32 rank, u32 dims[rank], raw f32 data.
// Total length is a pure function of the config, which load verifies before
// touching any tensor payload.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "maskrefine/errors.hpp"
#include "maskrefine/image.hpp"
#include "maskrefine/refiner.hpp"
#include "maskrefine/synth.hpp"

namespace maskrefine {

// ---------------------------------------------------------------------------
// PGM codec

struct PgmImage {
    int h = 0, w = 0;
    std::vector<std::uint8_t> px;  // row-major, maxval fixed at 255

    bool operator==(const PgmImage&) const = default;
};

namespace detail {

inline bool pgm_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

struct PgmCursor {
    std::string_view s;
    std::size_t i = 0;

    void skip_ws_and_comments() {
        while (i < s.size()) {
            if (pgm_space(s[i])) {
                ++i;
            } else if (s[i] == '#') {
                while (i < s.size() && s[i] != '\n')
                    ++i;
            } else {
                break;
            }
        }
    }

    long next_uint(const char* field) {
        skip_ws_and_comments();
        if (i >= s.size() || s[i] < '0' || s[i] > '9')
            throw ParseError(std::string("pgm: bad ") + field);
        long v = 0;
        while (i < s.size() && s[i] >= '0' && s[i] <= '9') {
            v = v * 10 + (s[i] - '0');
            if (v > 100'000'000)
                throw ParseError(std::string("pgm: bad ") + field);
            ++i;
        }
        return v;
    }
};

} // namespace detail

inline PgmImage read_pgm(std::string_view bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
        throw ParseError("pgm: unsupported magic");
    detail::PgmCursor cur{bytes, 2};
    const long w = cur.next_uint("width");
    const long h = cur.next_uint("height");
    const long maxval = cur.next_uint("maxval");
    if (w < 1 || w > 1'000'000 || h < 1 || h > 1'000'000 || w * h > 100'000'000)
        throw ParseError("pgm: bad dimensions");
    if (maxval != 255)
        throw ParseError("pgm: maxval must be 255");
    // Exactly one whitespace byte separates the header from the raster.
    if (cur.i >= bytes.size() || !detail::pgm_space(bytes[cur.i]))
        throw ParseError("pgm: bad maxval separator");
    ++cur.i;
    const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (bytes.size() - cur.i < need)
        throw ParseError("pgm: truncated pixel data");
    if (bytes.size() - cur.i > need)
        throw ParseError("pgm: trailing bytes after pixel data");
    PgmImage img;
    img.h = static_cast<int>(h);
    img.w = static_cast<int>(w);
    img.px.assign(bytes.begin() + static_cast<std::ptrdiff_t>(cur.i), bytes.end());
    return img;
}

// Canonical header, so identical images serialize byte-identically everywhere.
inline std::string write_pgm(const PgmImage& img) {
    if (img.h < 1 || img.w < 1 ||
        img.px.size() != static_cast<std::size_t>(img.h) * static_cast<std::size_t>(img.w))
        throw ValueError("write_pgm: pixel count does not match dims");
    std::string out = "P5\n" + std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.px.data()), img.px.size());
    return out;
}

// Masks encode bg = 0, fg = 255 on disk; reading binarizes at >= 128 so
// multi-valued ground-truth conventions collapse onto {0, 1}.
inline PgmImage pgm_from_mask(const Mask& m) {
    if (!is_binary(m))
        throw ValueError("pgm_from_mask: mask must be binary");
    PgmImage img;
    img.h = m.h;
    img.w = m.w;
    img.px.resize(m.px.size());
    for (std::size_t i = 0; i < m.px.size(); ++i)
        img.px[i] = m.px[i] ? 255 : 0;
    return img;
}

inline Mask mask_from_pgm(const PgmImage& img) {
    Mask m(img.h, img.w);
    for (std::size_t i = 0; i < img.px.size(); ++i)
        m.px[i] = img.px[i] >= 128 ? 1 : 0;
    return m;
}

inline PgmImage pgm_from_gray(const GrayImage& g) {
    PgmImage img;
    img.h = g.h;
    img.w = g.w;
    img.px.resize(g.px.size());
    for (std::size_t i = 0; i < g.px.size(); ++i) {
        const float v = std::clamp(g.px[i], 0.0f, 1.0f);
        img.px[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    return img;
}

inline GrayImage gray_from_pgm(const PgmImage& img) {
    GrayImage g(img.h, img.w);
    for (std::size_t i = 0; i < img.px.size(); ++i)
        g.px[i] = static_cast<float>(img.px[i]) / 255.0f;
    return g;
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IngestError("cannot read file: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad())
        throw IngestError("cannot read file: " + path.string());
    return bytes;
}

// Writes to a sibling temp file and renames over the target, so a failed
// invocation never leaves a partial output behind.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IngestError("cannot write file: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out)
            throw IngestError("cannot write file: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw IngestError("cannot rename " + tmp.string() + " to " + path.string());
    }
}

inline PgmImage load_pgm(const std::filesystem::path& path) {
    try {
        return read_pgm(read_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

inline void save_pgm(const std::filesystem::path& path, const PgmImage& img) {
    write_file_atomic(path, write_pgm(img));
}

// ---------------------------------------------------------------------------
// Dataset directories

inline std::string sample_index_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06d", index);
    return buf;
}

inline void save_dataset_dir(const std::filesystem::path& root, std::span<const Sample> samples) {
    namespace fs = std::filesystem;
    fs::create_directories(root / "source");
    fs::create_directories(root / "mask");
    fs::create_directories(root / "gt");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::string name = sample_index_name(static_cast<int>(i)) + ".pgm";
        save_pgm(root / "source" / name, pgm_from_gray(samples[i].source));
        save_pgm(root / "mask" / name, pgm_from_mask(samples[i].mask_noisy));
        save_pgm(root / "gt" / name, pgm_from_mask(samples[i].mask_gt));
    }
}

namespace detail {

inline bool parse_index_name(const std::filesystem::path& p, std::string& index) {
    if (p.extension() != ".pgm")
        return false;
    const std::string stem = p.stem().string();
    if (stem.size() != 6)
        return false;
    for (char c : stem)
        if (c < '0' || c > '9')
            return false;
    index = stem;
    return true;
}

} // namespace detail

// One Sample per 6-digit index present in all of source/, mask/ and gt/,
// sorted ascending. An index present in some but not all subdirectories is an
// ingestion error naming the missing file.
inline std::vector<Sample> load_dataset_dir(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    const char* subs[3] = {"source", "mask", "gt"};
    std::vector<std::string> indices;
    for (const char* sub : subs) {
        const fs::path dir = root / sub;
        if (!fs::is_directory(dir))
            throw IngestError("dataset: missing directory " + dir.string());
        for (const auto& entry : fs::directory_iterator(dir)) {
            std::string idx;
            if (detail::parse_index_name(entry.path(), idx))
                indices.push_back(idx);
        }
    }
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());

    std::vector<Sample> samples;
    samples.reserve(indices.size());
    for (const std::string& idx : indices) {
        for (const char* sub : subs)
            if (!fs::exists(root / sub / (idx + ".pgm")))
                throw IngestError("dataset: missing " + idx + "/" + sub);
        Sample s;
        s.source = gray_from_pgm(load_pgm(root / "source" / (idx + ".pgm")));
        s.mask_noisy = mask_from_pgm(load_pgm(root / "mask" / (idx + ".pgm")));
        s.mask_gt = mask_from_pgm(load_pgm(root / "gt" / (idx + ".pgm")));
        if (s.mask_noisy.h != s.source.h || s.mask_noisy.w != s.source.w ||
            s.mask_gt.h != s.source.h || s.mask_gt.w != s.source.w)
            throw IngestError("dataset: dim mismatch at " + idx);
        samples.push_back(std::move(s));
    }
    return samples;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_f32(std::string& out, float f) {
    put_u32(out, std::bit_cast<std::uint32_t>(f));
}

struct ByteReader {
    std::string_view s;
    std::size_t i = 0;

    std::uint32_t get_u32() {
        // Length is validated up front, so running short here is internal.
        if (s.size() - i < 4)
            throw ParseError("checkpoint: length mismatch");
        const std::uint32_t v = static_cast<std::uint8_t>(s[i]) |
                                (static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[i + 1])) << 8) |
                                (static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[i + 2])) << 16) |
                                (static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[i + 3])) << 24);
        i += 4;
        return v;
    }

    float get_f32() { return std::bit_cast<float>(get_u32()); }
};

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::size_t kCheckpointHeaderSize = 4 + 4 + 3 * 4 + 4;  // magic..threshold

} // namespace detail

// Byte length implied by a config: header plus, per convolution, a rank-4
// weight record and a rank-1 bias record.
inline std::size_t checkpoint_size(const RefinerConfig& cfg) {
    std::size_t total = detail::kCheckpointHeaderSize;
    for (const KernelShape& s : kernel_shapes(cfg)) {
        total += 4 + 4 * 4 + 4 * (static_cast<std::size_t>(s.k) * s.k * s.c_in * s.c_out);
        total += 4 + 1 * 4 + 4 * static_cast<std::size_t>(s.c_out);
    }
    return total;
}

inline std::string save_checkpoint(const RefinerConfig& cfg, const RefinerParams& params) {
    check_params(cfg, params);
    std::string out = "MRN1";
    detail::put_u32(out, detail::kCheckpointVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.levels));
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.base_channels));
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.source_channels));
    detail::put_f32(out, cfg.threshold);
    for_each_kernel(params, [&](const ConvKernel& k) {
        detail::put_u32(out, 4);
        detail::put_u32(out, static_cast<std::uint32_t>(k.weights.n()));
        detail::put_u32(out, static_cast<std::uint32_t>(k.weights.c()));
        detail::put_u32(out, static_cast<std::uint32_t>(k.weights.h()));
        detail::put_u32(out, static_cast<std::uint32_t>(k.weights.w()));
        for (float v : k.weights.raw())
            detail::put_f32(out, v);
        detail::put_u32(out, 1);
        detail::put_u32(out, static_cast<std::uint32_t>(k.bias.size()));
        for (float v : k.bias)
            detail::put_f32(out, v);
    });
    return out;
}

inline std::pair<RefinerConfig, RefinerParams> load_checkpoint(std::string_view bytes) {
    if (bytes.size() < 4 || bytes.substr(0, 4) != "MRN1")
        throw ParseError("checkpoint: bad magic");
    if (bytes.size() < detail::kCheckpointHeaderSize)
        throw ParseError("checkpoint: length mismatch");
    detail::ByteReader rd{bytes, 4};
    const std::uint32_t version = rd.get_u32();
    if (version != detail::kCheckpointVersion)
        throw ParseError("checkpoint: unsupported version " + std::to_string(version));
    RefinerConfig cfg;
    const std::uint32_t levels = rd.get_u32();
    const std::uint32_t base = rd.get_u32();
    const std::uint32_t source = rd.get_u32();
    cfg.threshold = rd.get_f32();
    if (levels < 1 || levels > 16 || base < 1 || base > 4096 || source < 1 || source > 4096 ||
        !(cfg.threshold >= 0.0f && cfg.threshold <= 1.0f))
        throw ParseError("checkpoint: invalid config");
    cfg.levels = static_cast<int>(levels);
    cfg.base_channels = static_cast<int>(base);
    cfg.source_channels = static_cast<int>(source);
    if (bytes.size() != checkpoint_size(cfg))
        throw ParseError("checkpoint: length mismatch");

    RefinerParams params = make_params(cfg);
    for_each_kernel(params, [&](ConvKernel& k) {
        if (rd.get_u32() != 4 || rd.get_u32() != static_cast<std::uint32_t>(k.weights.n()) ||
            rd.get_u32() != static_cast<std::uint32_t>(k.weights.c()) ||
            rd.get_u32() != static_cast<std::uint32_t>(k.weights.h()) ||
            rd.get_u32() != static_cast<std::uint32_t>(k.weights.w()))
            throw ParseError("checkpoint: tensor header mismatch");
        for (float& v : k.weights.raw())
            v = rd.get_f32();
        if (rd.get_u32() != 1 || rd.get_u32() != static_cast<std::uint32_t>(k.bias.size()))
            throw ParseError("checkpoint: tensor header mismatch");
        for (float& v : k.bias)
            v = rd.get_f32();
    });
    return {cfg, std::move(params)};
}

inline void save_checkpoint_file(const std::filesystem::path& path, const RefinerConfig& cfg,
                                 const RefinerParams& params) {
    write_file_atomic(path, save_checkpoint(cfg, params));
}

inline std::pair<RefinerConfig, RefinerParams> load_checkpoint_file(
    const std::filesystem::path& path) {
    try {
        return load_checkpoint(read_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

} // namespace maskrefine
