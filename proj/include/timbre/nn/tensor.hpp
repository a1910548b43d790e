#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace timbre::nn {

using Index = Eigen::Index;

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<Mat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const Mat<T>>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Equal-length sequences stacked frame-major along rows: sequence s occupies
// rows [s * seq_len, (s + 1) * seq_len). Convolutions never read across
// sequence boundaries.
template <typename T>
struct SeqBatch {
  Mat<T> data;
  Index seq_len = 0;

  SeqBatch() = default;
  SeqBatch(Index n_seqs, Index len, Index channels)
      : data(Mat<T>::Zero(n_seqs * len, channels)), seq_len(len) {}
  SeqBatch(Mat<T> m, Index len) : data(std::move(m)), seq_len(len) {
    if (len <= 0 || data.rows() % len != 0) {
      throw ShapeError("SeqBatch: rows not a multiple of seq_len");
    }
  }

  Index sequences() const { return seq_len == 0 ? 0 : data.rows() / seq_len; }
  Index frames() const { return data.rows(); }
  Index channels() const { return data.cols(); }
  auto sequence(Index s) { return data.middleRows(s * seq_len, seq_len); }
  auto sequence(Index s) const { return data.middleRows(s * seq_len, seq_len); }
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

}  // namespace timbre::nn
