#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "kdst/common.hpp"

namespace kdst::numkit {

// Compressed sparse row matrix with sorted, duplicate-free columns per row.
// Always a constant in the computation graph (adjacency-like operators).
template <class S>
struct CsrMatrixT {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<std::int64_t> row_ptr;  // size n_rows + 1
  std::vector<std::int32_t> col_idx;
  std::vector<S> values;

  std::size_t nnz() const { return col_idx.size(); }

  void validate() const {
    if (row_ptr.size() != n_rows + 1) throw ShapeError("csr: row_ptr size mismatch");
    if (row_ptr.empty() || row_ptr.front() != 0) throw ShapeError("csr: row_ptr[0] != 0");
    if (static_cast<std::size_t>(row_ptr.back()) != col_idx.size() || col_idx.size() != values.size())
      throw ShapeError("csr: row_ptr[last]/col_idx/values disagree");
    for (std::size_t r = 0; r < n_rows; ++r) {
      if (row_ptr[r] > row_ptr[r + 1]) throw ShapeError("csr: row_ptr not nondecreasing");
      for (std::int64_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
        const std::int32_t c = col_idx[static_cast<std::size_t>(k)];
        if (c < 0 || static_cast<std::size_t>(c) >= n_cols)
          throw ShapeError("csr: column index out of range");
        if (k > row_ptr[r] && col_idx[static_cast<std::size_t>(k - 1)] >= c)
          throw ShapeError("csr: columns not strictly ascending in row " + std::to_string(r));
      }
    }
  }

  static CsrMatrixT identity(std::size_t n) {
    CsrMatrixT m;
    m.n_rows = m.n_cols = n;
    m.row_ptr.resize(n + 1);
    m.col_idx.resize(n);
    m.values.assign(n, S(1));
    for (std::size_t i = 0; i <= n; ++i) m.row_ptr[i] = static_cast<std::int64_t>(i);
    for (std::size_t i = 0; i < n; ++i) m.col_idx[i] = static_cast<std::int32_t>(i);
    return m;
  }

  // Builds from (row, col, value) triples; entries are sorted and duplicates
  // within a row are summed.
  static CsrMatrixT from_coo(std::size_t n_rows, std::size_t n_cols,
                             std::vector<std::int32_t> rows, std::vector<std::int32_t> cols,
                             std::vector<S> vals) {
    if (rows.size() != cols.size() || rows.size() != vals.size())
      throw ShapeError("csr: coo arrays disagree");
    std::vector<std::size_t> order(rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (rows[a] != rows[b]) return rows[a] < rows[b];
      return cols[a] < cols[b];
    });
    CsrMatrixT m;
    m.n_rows = n_rows;
    m.n_cols = n_cols;
    m.row_ptr.assign(n_rows + 1, 0);
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
      const std::size_t i = order[oi];
      if (!m.col_idx.empty() && m.col_idx.back() == cols[i] &&
          static_cast<std::size_t>(m.row_ptr[static_cast<std::size_t>(rows[i]) + 1]) ==
              m.col_idx.size()) {
        m.values.back() += vals[i];
        continue;
      }
      m.col_idx.push_back(cols[i]);
      m.values.push_back(vals[i]);
      m.row_ptr[static_cast<std::size_t>(rows[i]) + 1] = static_cast<std::int64_t>(m.col_idx.size());
    }
    // row_ptr entries for empty rows still hold 0; make them cumulative.
    for (std::size_t r = 1; r <= n_rows; ++r)
      m.row_ptr[r] = std::max(m.row_ptr[r], m.row_ptr[r - 1]);
    m.validate();
    return m;
  }

  CsrMatrixT transpose() const {
    CsrMatrixT t;
    t.n_rows = n_cols;
    t.n_cols = n_rows;
    t.row_ptr.assign(n_cols + 1, 0);
    for (const std::int32_t c : col_idx) t.row_ptr[static_cast<std::size_t>(c) + 1]++;
    for (std::size_t i = 1; i <= n_cols; ++i) t.row_ptr[i] += t.row_ptr[i - 1];
    t.col_idx.resize(nnz());
    t.values.resize(nnz());
    std::vector<std::int64_t> next(t.row_ptr.begin(), t.row_ptr.end() - 1);
    for (std::size_t r = 0; r < n_rows; ++r) {
      for (std::int64_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
        const auto c = static_cast<std::size_t>(col_idx[static_cast<std::size_t>(k)]);
        const auto slot = static_cast<std::size_t>(next[c]++);
        t.col_idx[slot] = static_cast<std::int32_t>(r);
        t.values[slot] = values[static_cast<std::size_t>(k)];
      }
    }
    return t;
  }

  std::vector<S> densify() const {
    std::vector<S> d(n_rows * n_cols, S(0));
    for (std::size_t r = 0; r < n_rows; ++r)
      for (std::int64_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
        d[r * n_cols + static_cast<std::size_t>(col_idx[static_cast<std::size_t>(k)])] =
            values[static_cast<std::size_t>(k)];
    return d;
  }

  template <class T>
  CsrMatrixT<T> cast() const {
    CsrMatrixT<T> m;
    m.n_rows = n_rows;
    m.n_cols = n_cols;
    m.row_ptr = row_ptr;
    m.col_idx = col_idx;
    m.values.assign(values.begin(), values.end());
    return m;
  }
};

using CsrMatrix = CsrMatrixT<float>;

}  // namespace kdst::numkit
