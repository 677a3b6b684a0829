// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <limits>
#include <type_traits>
#include <span>
#include <vector>

#include <json.hpp>

#include "radsnn/error.hpp"

namespace radsnn {

// Dense row-major matrix.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

// Serialized as an array of rows.
template <typename T>
nlohmann::json matrix_to_json(const Matrix<T>& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (const T& v : m.row(r)) {
      if constexpr (sizeof(T) == 1)
        row.push_back(static_cast<int>(v));
      else
        row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename T, typename Wide = T>
Matrix<T> matrix_from_json(const nlohmann::json& j, const char* what) {
  require(j.is_array() && !j.empty(), "parse_error", what, ": expected nonempty array of rows");
  const std::size_t cols = j.front().size();
  Matrix<T> m(j.size(), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    require(j[r].is_array() && j[r].size() == cols, "parse_error", what, ": row ", r,
            " has inconsistent length");
    for (std::size_t c = 0; c < cols; ++c) {
      const Wide v = j[r][c].get<Wide>();
      if constexpr (std::is_integral_v<T>)
        require(v >= std::numeric_limits<T>::min() && v <= std::numeric_limits<T>::max(),
                "parse_error", what, ": value ", v, " out of range");
      m(r, c) = static_cast<T>(v);
    }
  }
  return m;
}

}  // namespace radsnn
