#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedeeg/model.hpp"

namespace fedeeg {

// One hospital's labeled segments, stored as a dense row-major matrix.
struct ClientDataset {
  std::string client_id;
  std::size_t dim = 0;
  std::vector<double> samples;        // size() * dim
  std::vector<std::uint8_t> labels;   // 0 interictal, 1 preictal

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(samples).subspan(i * dim, dim);
  }
  MatrixView inputs() const { return MatrixView(samples, size(), dim); }
  Batch as_batch() const { return Batch{inputs(), labels}; }

  void push_back(std::span<const double> x, std::uint8_t y);
  // Rows `indices`, in order, as a new dataset.
  ClientDataset select(std::span<const std::size_t> indices) const;
  // Throws DimensionError when sample storage and labels disagree.
  void validate() const;
};

// Reusable gather buffer for mini-batches.
class BatchBuffer {
 public:
  Batch gather(const ClientDataset& data, std::span<const std::size_t> indices);

 private:
  std::vector<double> inputs_;
  std::vector<std::uint8_t> labels_;
};

}  // namespace fedeeg
