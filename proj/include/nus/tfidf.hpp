#pragma once

// TF-IDF weighting shared by knowledge extraction, sub-dialog retrieval and
// global-pool shortlisting. tf is the raw count, idf = ln(N / (1 + df)) + 1,
// and vectors are L2-normalised so cosine similarity is a sparse dot product.
// Terms absent from the fitted vocabulary are dropped.

#include "nus/corpus.hpp"

#include <Eigen/SparseCore>

#include <string>
#include <unordered_map>
#include <vector>

namespace nus {

using SparseVec = Eigen::SparseVector<double>;

class TfidfModel {
 public:
  TfidfModel() = default;

  /// Fits vocabulary and document frequencies; every entry of docs is one document.
  static TfidfModel fit(const std::vector<corpus::Tokens>& docs);

  SparseVec transform(const corpus::Tokens& tokens) const;

  std::size_t document_count() const { return n_docs_; }
  std::size_t vocabulary_size() const { return idf_.size(); }
  /// idf of a fitted term; 0 if the term is unknown.
  double idf(const std::string& term) const;

 private:
  std::unordered_map<std::string, int> vocab_;
  std::vector<double> idf_;
  std::size_t n_docs_ = 0;
};

/// Dot product of two L2-normalised vectors; 0 when either is empty.
double cosine(const SparseVec& a, const SparseVec& b);

}  // namespace nus
