#pragma once

#include "cpdpm/cp_model.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace cpdpm {

/// Malformed input file. `offset()` is the byte position where decoding failed.
class FormatError : public std::runtime_error
{
public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset)
    {
    }
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

using Bytes = std::vector<std::uint8_t>;

/*
 * T3F: "T3F1", u32 n, u32 m, u32 l, then n*m*l float32 in axis-major order.
 * CPF: "CPF1", u32 R, u32 n, u32 m, u32 l, R float64 weights, then the factor
 *      matrices A (n x R), B (m x R), C (l x R) as row-major float32 blocks.
 * All integers and floats little-endian.
 */
inline constexpr std::size_t t3f_header_bytes = 16;
inline constexpr std::size_t cpf_header_bytes = 20;

Bytes encode_t3f(const Tensor3d& t);
Tensor3d decode_t3f(const Bytes& bytes);

/// Decoded factors are widened to double and renormalized; the norms go into the weights.
Bytes encode_cpf(const CPModeld& model);
CPModeld decode_cpf(const Bytes& bytes);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const Bytes& bytes);

inline Tensor3d read_t3f(const std::filesystem::path& path) { return decode_t3f(read_file(path)); }
inline void write_t3f(const std::filesystem::path& path, const Tensor3d& t) { write_file(path, encode_t3f(t)); }
inline CPModeld read_cpf(const std::filesystem::path& path) { return decode_cpf(read_file(path)); }
inline void write_cpf(const std::filesystem::path& path, const CPModeld& m) { write_file(path, encode_cpf(m)); }

/// Rounds every element to the nearest float32, matching what survives a T3F round trip.
Tensor3d round_to_float(Tensor3d t);
/// Rounds the factor matrices to float32, as stored in CPF. Weights stay double.
CPModeld round_to_float(CPModeld m);

}  // namespace cpdpm
