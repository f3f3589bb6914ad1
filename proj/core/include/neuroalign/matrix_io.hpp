#ifndef NEUROALIGN_MATRIX_IO_HPP
#define NEUROALIGN_MATRIX_IO_HPP

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace neuroalign {

/// n x d matrix with one unique label per row (stimulus ids).
struct LabeledMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> labels;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }

  /// Throws InvalidArgument on label count mismatch, duplicate labels, or
  /// non-finite entries.
  void validate() const;

  /// Rows reordered to follow `order`; throws if a label is missing.
  LabeledMatrix aligned_to(const std::vector<std::string>& order) const;
};

/// Model representations D and brain recordings B share one container.
using ReprMatrix = LabeledMatrix;
using BrainMatrix = LabeledMatrix;

/// Binary form: 8-byte magic "NALREPR1", little-endian u64 header length,
/// JSON header {"n", "d", "labels"}, then n*d row-major little-endian float32.
std::string encode_matrix(const LabeledMatrix& m);
LabeledMatrix decode_matrix(std::string_view bytes);

/// CSV: header "label,d0,d1,...", then one row per stimulus.
std::string matrix_to_csv(const LabeledMatrix& m);
LabeledMatrix matrix_from_csv(std::string_view text);

void save_matrix(const std::filesystem::path& path, const LabeledMatrix& m);
/// Dispatches on extension: ".csv" is CSV, anything else binary.
LabeledMatrix load_matrix(const std::filesystem::path& path);

}  // namespace neuroalign

#endif  // NEUROALIGN_MATRIX_IO_HPP
