// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

// GPMF container: little-endian table of named tensors.
//
//   "GPMF" | u16 version | u32 count | count x tensor
//   tensor = u32 name_len | name (UTF-8) | u8 dtype | u8 rank | rank x u64 dim | data
//
// See docs/FORMAT.md for the reserved tensor names.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vpmap/camsolve_types.hpp"
#include "vpmap/core.hpp"
#include "vpmap/repr.hpp"

namespace vpmap::io {

inline constexpr std::uint16_t kFormatVersion = 1;

enum class DType : std::uint8_t { F32 = 0, F64 = 1, U8 = 2 };

std::string_view to_string(DType d);
std::size_t dtype_size(DType d);

struct Tensor {
    std::string name;
    DType dtype = DType::F64;
    std::vector<std::uint64_t> dims;
    std::vector<std::uint8_t> data;  ///< raw little-endian payload

    std::size_t elements() const;
    /// Values converted to double; u8 is read as an integer.
    std::vector<double> to_doubles() const;
    static Tensor from_doubles(std::string name, std::vector<std::uint64_t> dims, std::span<const double> values);
    static Tensor from_bytes(std::string name, std::vector<std::uint64_t> dims, std::vector<std::uint8_t> values);
};

/// Tensors in file order. Unknown names are kept as-is.
struct Container {
    std::vector<Tensor> tensors;

    const Tensor* find(std::string_view name) const;
    const Tensor& at(std::string_view name) const;  ///< InvalidInput if absent
    /// Replaces a tensor of the same name in place, or appends.
    void put(Tensor t);
};

std::vector<std::uint8_t> serialize(const Container& c);
/// NotGpm on a wrong magic; CorruptFile (with byte offset) on any structural damage.
Container parse(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_bytes(const std::string& path);
void write_bytes(const std::string& path, std::span<const std::uint8_t> bytes);
Container read_container(const std::string& path);
void write_container(const std::string& path, const Container& c);

// Typed views. Getters accept f32 or f64 (and u8 for scalar fields); anything else
// or a wrong rank/shape is a TypeError.

void put_points(Container& c, const std::string& name, const PointMap& p);
PointMap get_points(const Container& c, const std::string& name);

template <typename Tag>
void put_scalar_field(Container& c, const std::string& name, const Field<double, Tag>& f) {
    c.put(Tensor::from_doubles(name,
                               {static_cast<std::uint64_t>(f.frames()), static_cast<std::uint64_t>(f.height()),
                                static_cast<std::uint64_t>(f.width())},
                               f.values()));
}

std::vector<double> get_scalar_values(const Container& c, const std::string& name, FrameGrid& grid, int& frames);

template <typename Tag>
Field<double, Tag> get_scalar_field(const Container& c, const std::string& name) {
    FrameGrid grid;
    int frames = 0;
    std::vector<double> values = get_scalar_values(c, name, grid, frames);
    Field<double, Tag> f(frames, grid, 0.0);
    std::copy(values.begin(), values.end(), f.values().begin());
    return f;
}

void put_vector(Container& c, const std::string& name, std::span<const double> v);
std::vector<double> get_vector(const Container& c, const std::string& name);

void put_poses(Container& c, const std::vector<PoseSE3>& poses);
std::vector<PoseSE3> get_poses(const Container& c);

void put_intrinsics(Container& c, const std::vector<Intrinsics>& k);
std::vector<Intrinsics> get_intrinsics(const Container& c);

/// Flat gray u8 RGB of the given shape.
void put_gray_rgb(Container& c, int frames, const FrameGrid& grid);

// ---------------------------------------------------------------------------
// Tracks CSV: header `track_id,frame,u,v,visible`, one row per observation.

void write_tracks_csv(std::ostream& out, const std::vector<Trajectory2D>& tracks);
void write_tracks_csv(const std::string& path, const std::vector<Trajectory2D>& tracks);
/// Rows may come in any order; observations are sorted by frame within each track.
std::vector<Trajectory2D> read_tracks_csv(std::istream& in);
std::vector<Trajectory2D> read_tracks_csv(const std::string& path);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);

}  // namespace vpmap::io
