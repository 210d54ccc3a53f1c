// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "vpmap/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace vpmap::io {

static_assert(std::endian::native == std::endian::little, "container code assumes a little-endian host");

std::string_view to_string(DType d) {
    switch (d) {
        case DType::F32: return "f32";
        case DType::F64: return "f64";
        case DType::U8: return "u8";
    }
    return "?";
}

std::size_t dtype_size(DType d) {
    switch (d) {
        case DType::F32: return 4;
        case DType::F64: return 8;
        case DType::U8: return 1;
    }
    return 0;
}

std::size_t Tensor::elements() const {
    std::size_t n = 1;
    for (const auto d : dims) n *= static_cast<std::size_t>(d);
    return n;
}

std::vector<double> Tensor::to_doubles() const {
    const std::size_t n = elements();
    std::vector<double> out(n);
    switch (dtype) {
        case DType::F64:
            std::memcpy(out.data(), data.data(), n * sizeof(double));
            break;
        case DType::F32:
            for (std::size_t i = 0; i < n; ++i) {
                float f;
                std::memcpy(&f, data.data() + 4 * i, 4);
                out[i] = f;
            }
            break;
        case DType::U8:
            for (std::size_t i = 0; i < n; ++i) out[i] = data[i];
            break;
    }
    return out;
}

Tensor Tensor::from_doubles(std::string name, std::vector<std::uint64_t> dims, std::span<const double> values) {
    Tensor t{std::move(name), DType::F64, std::move(dims), {}};
    if (t.elements() != values.size()) throw Error(ErrorCode::ShapeError, "tensor dims do not match value count");
    t.data.resize(values.size() * sizeof(double));
    std::memcpy(t.data.data(), values.data(), t.data.size());
    return t;
}

Tensor Tensor::from_bytes(std::string name, std::vector<std::uint64_t> dims, std::vector<std::uint8_t> values) {
    Tensor t{std::move(name), DType::U8, std::move(dims), std::move(values)};
    if (t.elements() != t.data.size()) throw Error(ErrorCode::ShapeError, "tensor dims do not match value count");
    return t;
}

const Tensor* Container::find(std::string_view name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

const Tensor& Container::at(std::string_view name) const {
    if (const Tensor* t = find(name)) return *t;
    throw Error(ErrorCode::InvalidInput, "container has no tensor named '" + std::string(name) + "'");
}

void Container::put(Tensor t) {
    for (auto& existing : tensors) {
        if (existing.name == t.name) {
            existing = std::move(t);
            return;
        }
    }
    tensors.push_back(std::move(t));
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'G', 'P', 'M', 'F'};

template <class T>
void put_le(std::vector<std::uint8_t>& out, T v) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    [[noreturn]] void corrupt(const std::string& what) const {
        throw Error(ErrorCode::CorruptFile, what, pos_);
    }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) corrupt(std::string("truncated ") + what);
    }

    template <class T>
    T take(const char* what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::span<const std::uint8_t> take_bytes(std::size_t n, const char* what) {
        need(n, what);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

bool valid_utf8(std::span<const std::uint8_t> s) {
    std::size_t i = 0;
    while (i < s.size()) {
        const std::uint8_t c = s[i];
        int extra;
        std::uint32_t cp;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            extra = 1;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            extra = 2;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            extra = 3;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (i + extra >= s.size()) return false;
        for (int k = 1; k <= extra; ++k) {
            if ((s[i + k] & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (s[i + k] & 0x3F);
        }
        static constexpr std::uint32_t kMin[4] = {0, 0x80, 0x800, 0x10000};
        if (cp < kMin[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
        i += static_cast<std::size_t>(extra) + 1;
    }
    return true;
}

}  // namespace

std::vector<std::uint8_t> serialize(const Container& c) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_le<std::uint16_t>(out, kFormatVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.tensors.size()));
    for (const auto& t : c.tensors) {
        if (t.dims.size() > std::numeric_limits<std::uint8_t>::max()) throw Error(ErrorCode::InvalidInput, "tensor rank too large");
        if (t.data.size() != t.elements() * dtype_size(t.dtype)) {
            throw Error(ErrorCode::ShapeError, "tensor '" + t.name + "' payload does not match its dims");
        }
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
        out.insert(out.end(), t.name.begin(), t.name.end());
        put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype));
        put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.dims.size()));
        for (const auto d : t.dims) put_le<std::uint64_t>(out, d);
        out.insert(out.end(), t.data.begin(), t.data.end());
    }
    return out;
}

Container parse(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    const std::size_t magic_len = std::min<std::size_t>(bytes.size(), 4);
    if (magic_len > 0 && std::memcmp(bytes.data(), kMagic, magic_len) != 0) throw Error(ErrorCode::NotGpm, "not a GPMF container");
    r.take_bytes(4, "magic");
    const auto version = r.take<std::uint16_t>("version");
    if (version != kFormatVersion) {
        throw Error(ErrorCode::CorruptFile, "unsupported container version " + std::to_string(version), 4);
    }
    const auto count = r.take<std::uint32_t>("tensor count");

    Container c;
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::size_t start = r.offset();
        const auto name_len = r.take<std::uint32_t>("name length");
        const auto name_bytes = r.take_bytes(name_len, "name");
        if (!valid_utf8(name_bytes)) throw Error(ErrorCode::CorruptFile, "tensor name is not UTF-8", start + 4);
        Tensor t;
        t.name.assign(name_bytes.begin(), name_bytes.end());
        if (c.find(t.name)) throw Error(ErrorCode::CorruptFile, "duplicate tensor '" + t.name + "'", start);
        const std::size_t dtype_at = r.offset();
        const auto dtype = r.take<std::uint8_t>("dtype");
        if (dtype > static_cast<std::uint8_t>(DType::U8)) {
            throw Error(ErrorCode::CorruptFile, "unknown dtype tag " + std::to_string(dtype), dtype_at);
        }
        t.dtype = static_cast<DType>(dtype);
        const auto rank = r.take<std::uint8_t>("rank");
        // Bound the element count by what is left before allocating anything.
        const std::size_t budget = r.remaining() / dtype_size(t.dtype);
        std::size_t elements = 1;
        bool zero = false;
        bool too_big = false;
        for (std::uint8_t i = 0; i < rank; ++i) {
            const auto d = r.take<std::uint64_t>("dims");
            t.dims.push_back(d);
            if (d == 0) {
                zero = true;
            } else if (!too_big) {
                if (elements > budget / d) too_big = true;
                else elements *= static_cast<std::size_t>(d);
            }
        }
        if (zero) elements = 0;
        if (too_big && !zero) r.corrupt("truncated payload of '" + t.name + "'");
        const auto payload = r.take_bytes(elements * dtype_size(t.dtype), "payload");
        t.data.assign(payload.begin(), payload.end());
        c.tensors.push_back(std::move(t));
    }
    if (r.remaining() != 0) r.corrupt("trailing bytes after the last tensor");
    return c;
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

Container read_container(const std::string& path) { return parse(read_bytes(path)); }

void write_container(const std::string& path, const Container& c) { write_bytes(path, serialize(c)); }

// ---------------------------------------------------------------------------

namespace {

const Tensor& expect(const Container& c, const std::string& name, std::size_t rank, bool allow_u8) {
    const Tensor& t = c.at(name);
    if (t.dtype == DType::U8 && !allow_u8) {
        throw Error(ErrorCode::TypeError, "tensor '" + name + "' must be f32 or f64, found u8");
    }
    if (t.dims.size() != rank) {
        throw Error(ErrorCode::TypeError,
                    "tensor '" + name + "' must have rank " + std::to_string(rank) + ", found " + std::to_string(t.dims.size()));
    }
    return t;
}

int checked_int(std::uint64_t d, const std::string& name) {
    if (d > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) {
        throw Error(ErrorCode::TypeError, "tensor '" + name + "' dimension too large");
    }
    return static_cast<int>(d);
}

FrameGrid grid_of(const Tensor& t) {
    const FrameGrid g{checked_int(t.dims[2], t.name), checked_int(t.dims[1], t.name)};
    if (g.width < 1 || g.height < 1) throw Error(ErrorCode::TypeError, "tensor '" + t.name + "' has an empty frame");
    return g;
}

}  // namespace

void put_points(Container& c, const std::string& name, const PointMap& p) {
    std::vector<double> flat;
    flat.reserve(3 * p.size());
    for (const auto& v : p.values()) flat.insert(flat.end(), {v.x(), v.y(), v.z()});
    c.put(Tensor::from_doubles(name,
                               {static_cast<std::uint64_t>(p.frames()), static_cast<std::uint64_t>(p.height()),
                                static_cast<std::uint64_t>(p.width()), 3},
                               flat));
}

PointMap get_points(const Container& c, const std::string& name) {
    const Tensor& t = expect(c, name, 4, false);
    if (t.dims[3] != 3) throw Error(ErrorCode::TypeError, "tensor '" + name + "' must end in a dimension of 3");
    PointMap p(checked_int(t.dims[0], name), grid_of(t), Vec3::Zero());
    const std::vector<double> flat = t.to_doubles();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = Vec3(flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]);
    return p;
}

std::vector<double> get_scalar_values(const Container& c, const std::string& name, FrameGrid& grid, int& frames) {
    const Tensor& t = expect(c, name, 3, true);
    grid = grid_of(t);
    frames = checked_int(t.dims[0], name);
    return t.to_doubles();
}

void put_vector(Container& c, const std::string& name, std::span<const double> v) {
    c.put(Tensor::from_doubles(name, {static_cast<std::uint64_t>(v.size())}, v));
}

std::vector<double> get_vector(const Container& c, const std::string& name) {
    return expect(c, name, 1, false).to_doubles();
}

void put_poses(Container& c, const std::vector<PoseSE3>& poses) {
    std::vector<double> flat;
    for (const auto& p : poses) {
        for (int r = 0; r < 3; ++r) {
            for (int k = 0; k < 3; ++k) flat.push_back(p.rotation(r, k));
            flat.push_back(p.translation(r));
        }
    }
    c.put(Tensor::from_doubles("poses", {static_cast<std::uint64_t>(poses.size()), 3, 4}, flat));
}

std::vector<PoseSE3> get_poses(const Container& c) {
    const Tensor& t = expect(c, "poses", 3, false);
    if (t.dims[1] != 3 || t.dims[2] != 4) throw Error(ErrorCode::TypeError, "tensor 'poses' must be [T,3,4]");
    const std::vector<double> flat = t.to_doubles();
    std::vector<PoseSE3> out(static_cast<std::size_t>(t.dims[0]));
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (int r = 0; r < 3; ++r) {
            for (int k = 0; k < 3; ++k) out[i].rotation(r, k) = flat[12 * i + 4 * r + k];
            out[i].translation(r) = flat[12 * i + 4 * r + 3];
        }
    }
    return out;
}

void put_intrinsics(Container& c, const std::vector<Intrinsics>& k) {
    std::vector<double> f;
    for (const auto& i : k) f.push_back(i.focal);
    put_vector(c, "intrinsics", f);
}

std::vector<Intrinsics> get_intrinsics(const Container& c) {
    std::vector<Intrinsics> out;
    for (const double f : get_vector(c, "intrinsics")) {
        Intrinsics k{f};
        k.validate();
        out.push_back(k);
    }
    return out;
}

void put_gray_rgb(Container& c, int frames, const FrameGrid& grid) {
    const std::vector<std::uint64_t> dims{static_cast<std::uint64_t>(frames), static_cast<std::uint64_t>(grid.height),
                                          static_cast<std::uint64_t>(grid.width), 3};
    c.put(Tensor::from_bytes("rgb", dims, std::vector<std::uint8_t>(static_cast<std::size_t>(frames) * grid.pixels() * 3, 128)));
}

// ---------------------------------------------------------------------------

void write_tracks_csv(std::ostream& out, const std::vector<Trajectory2D>& tracks) {
    out << "track_id,frame,u,v,visible\n";
    out << std::setprecision(17);
    for (const auto& t : tracks) {
        for (const auto& o : t.observations) {
            out << t.id << ',' << o.frame << ',' << o.u << ',' << o.v << ',' << (o.visible ? 1 : 0) << '\n';
        }
    }
}

void write_tracks_csv(const std::string& path, const std::vector<Trajectory2D>& tracks) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    write_tracks_csv(out, tracks);
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

namespace {

template <class T>
T parse_number(const std::string& field, int line_no) {
    std::istringstream s(field);
    T v;
    if (!(s >> v) || !(s >> std::ws).eof()) {
        throw Error(ErrorCode::InvalidInput, "tracks line " + std::to_string(line_no) + ": bad number '" + field + "'");
    }
    return v;
}

}  // namespace

std::vector<Trajectory2D> read_tracks_csv(std::istream& in) {
    std::string line;
    int line_no = 0;
    std::map<int, Trajectory2D> by_id;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line_no == 1 && line.rfind("track_id", 0) == 0) continue;
        std::vector<std::string> fields;
        std::istringstream s(line);
        for (std::string f; std::getline(s, f, ',');) fields.push_back(f);
        if (fields.size() != 5) {
            throw Error(ErrorCode::InvalidInput, "tracks line " + std::to_string(line_no) + ": expected 5 fields");
        }
        const int id = parse_number<int>(fields[0], line_no);
        TrackObservation o;
        o.frame = parse_number<int>(fields[1], line_no);
        o.u = parse_number<double>(fields[2], line_no);
        o.v = parse_number<double>(fields[3], line_no);
        const int vis = parse_number<int>(fields[4], line_no);
        if (vis != 0 && vis != 1) throw Error(ErrorCode::InvalidInput, "tracks line " + std::to_string(line_no) + ": visible must be 0 or 1");
        if (o.frame < 0 || !std::isfinite(o.u) || !std::isfinite(o.v)) {
            throw Error(ErrorCode::InvalidInput, "tracks line " + std::to_string(line_no) + ": invalid observation");
        }
        o.visible = vis == 1;
        auto& track = by_id[id];
        track.id = id;
        track.observations.push_back(o);
    }
    std::vector<Trajectory2D> out;
    for (auto& [id, t] : by_id) {
        std::stable_sort(t.observations.begin(), t.observations.end(),
                         [](const auto& a, const auto& b) { return a.frame < b.frame; });
        for (std::size_t k = 1; k < t.observations.size(); ++k) {
            if (t.observations[k].frame == t.observations[k - 1].frame) {
                throw Error(ErrorCode::InvalidInput, "track " + std::to_string(id) + " repeats frame " +
                                                         std::to_string(t.observations[k].frame));
            }
        }
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<Trajectory2D> read_tracks_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    return read_tracks_csv(in);
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error(ErrorCode::IoError, "SHA-256 failed");
    }
    std::ostringstream s;
    for (unsigned int i = 0; i < len; ++i) s << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    return s.str();
}

}  // namespace vpmap::io
