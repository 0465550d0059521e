#include "fedeeg/dataset.hpp"

#include <algorithm>

#include "fedeeg/error.hpp"

namespace fedeeg {

void ClientDataset::push_back(std::span<const double> x, std::uint8_t y) {
  if (x.size() != dim) throw DimensionError("segment width does not match dataset dim");
  samples.insert(samples.end(), x.begin(), x.end());
  labels.push_back(y);
}

ClientDataset ClientDataset::select(std::span<const std::size_t> indices) const {
  ClientDataset out;
  out.client_id = client_id;
  out.dim = dim;
  out.samples.reserve(indices.size() * dim);
  out.labels.reserve(indices.size());
  for (auto i : indices) out.push_back(row(i), labels.at(i));
  return out;
}

void ClientDataset::validate() const {
  if (dim == 0) throw DimensionError("dataset dim must be >= 1");
  if (samples.size() != labels.size() * dim) {
    throw DimensionError("dataset '" + client_id + "': sample storage does not match labels");
  }
  if (std::any_of(labels.begin(), labels.end(), [](auto y) { return y > 1; })) {
    throw DimensionError("dataset '" + client_id + "': labels must be 0 or 1");
  }
}

Batch BatchBuffer::gather(const ClientDataset& data, std::span<const std::size_t> indices) {
  inputs_.resize(indices.size() * data.dim);
  labels_.resize(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto r = data.row(indices[k]);
    std::copy(r.begin(), r.end(), inputs_.begin() + static_cast<std::ptrdiff_t>(k * data.dim));
    labels_[k] = data.labels[indices[k]];
  }
  return Batch{MatrixView(inputs_, indices.size(), data.dim), labels_};
}

}  // namespace fedeeg
