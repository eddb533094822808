#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tfp/error.hpp"

namespace tfp {

// Dense row-major 2-D array.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  bool same_shape(const Grid& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  Grid transposed() const {
    Grid out(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
    return out;
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

// 8-bit grayscale video frame.
struct Frame {
  Grid<std::uint8_t> pixels;
  std::size_t index = 0;

  std::size_t rows() const noexcept { return pixels.rows(); }
  std::size_t cols() const noexcept { return pixels.cols(); }
  friend bool operator==(const Frame&, const Frame&) = default;
};

// Binary foreground mask; nonzero entries are foreground.
struct MotionMask {
  Grid<std::uint8_t> mask;
  std::size_t frame_index = 0;

  std::size_t rows() const noexcept { return mask.rows(); }
  std::size_t cols() const noexcept { return mask.cols(); }
  bool at(std::size_t r, std::size_t c) const { return mask(r, c) != 0; }
  friend bool operator==(const MotionMask&, const MotionMask&) = default;
};

inline MotionMask full_mask(std::size_t rows, std::size_t cols, bool value = true,
                            std::size_t frame_index = 0) {
  return MotionMask{Grid<std::uint8_t>(rows, cols, value ? 1 : 0), frame_index};
}

inline void require_same_shape(const Frame& f, const MotionMask& m, const char* what) {
  if (f.rows() != m.rows() || f.cols() != m.cols())
    throw InputError(std::string(what) + ": frame is " + std::to_string(f.rows()) + "x" +
                     std::to_string(f.cols()) + " but mask is " + std::to_string(m.rows()) +
                     "x" + std::to_string(m.cols()));
}

}  // namespace tfp
