#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "infocal/errors.hpp"
#include "infocal/num/tensor.hpp"

namespace infocal {

using TokenId = std::int32_t;
inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;

/// A padded group of token sequences in time-major layout: row `t * size + b`
/// is token `t` of sequence `b`. Positions past a sequence's end and explicit
/// pad tokens are invalid and carry id 0.
struct SequenceBatch {
  std::size_t size = 0;   // sequences
  std::size_t steps = 0;  // longest length
  std::vector<TokenId> ids;
  std::vector<std::size_t> lengths;
  std::vector<std::uint8_t> valid;

  static SequenceBatch from(std::span<const std::vector<TokenId>> sequences) {
    expects(!sequences.empty(), "batch needs at least one sequence");
    SequenceBatch b;
    b.size = sequences.size();
    for (const auto& s : sequences) {
      expects(!s.empty(), "sequences must have length >= 1");
      b.steps = std::max(b.steps, s.size());
      b.lengths.push_back(s.size());
    }
    b.ids.assign(b.steps * b.size, kPadId);
    b.valid.assign(b.steps * b.size, 0);
    for (std::size_t j = 0; j < b.size; ++j)
      for (std::size_t t = 0; t < sequences[j].size(); ++t) {
        b.ids[t * b.size + j] = sequences[j][t];
        b.valid[t * b.size + j] = sequences[j][t] != kPadId;
      }
    return b;
  }

  static SequenceBatch single(const std::vector<TokenId>& sequence) {
    return from(std::span<const std::vector<TokenId>>(&sequence, 1));
  }

  std::size_t rows() const { return size * steps; }
  std::size_t index(std::size_t t, std::size_t b) const { return t * size + b; }

  std::span<const TokenId> step_ids(std::size_t t) const {
    return std::span<const TokenId>(ids).subspan(t * size, size);
  }

  bool step_all_valid(std::size_t t) const {
    return std::all_of(valid.begin() + static_cast<std::ptrdiff_t>(t * size),
                       valid.begin() + static_cast<std::ptrdiff_t>((t + 1) * size), [](auto v) { return v != 0; });
  }

  std::size_t valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
  }

  /// [rows, 1] column of 0/1 validity flags.
  template <typename T>
  num::Tensor<T> valid_column() const {
    std::vector<T> v(valid.begin(), valid.end());
    return num::Tensor<T>({rows(), 1}, std::move(v));
  }

  /// [size, 1] validity flags for one time step.
  template <typename T>
  num::Tensor<T> step_valid_column(std::size_t t) const {
    std::vector<T> v(valid.begin() + static_cast<std::ptrdiff_t>(t * size),
                     valid.begin() + static_cast<std::ptrdiff_t>((t + 1) * size));
    return num::Tensor<T>({size, 1}, std::move(v));
  }

  /// Per-sequence view of a time-major [rows, 1] column.
  template <typename T>
  std::vector<T> gather_sequence(const num::Tensor<T>& column, std::size_t b) const {
    std::vector<T> out(lengths[b]);
    for (std::size_t t = 0; t < lengths[b]; ++t) out[t] = column[index(t, b)];
    return out;
  }
};

}  // namespace infocal
