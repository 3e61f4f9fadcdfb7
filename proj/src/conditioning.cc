/*
 * Copyright 2026 The expstab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "expstab/conditioning.h"

#include <algorithm>
#include <atomic>
#include <exception>
#include <cmath>
#include <ostream>
#include <string>
#include <thread>

#include "expstab/csv.h"
#include "expstab/random.h"

namespace expstab {

std::string_view kernel_name(SimulationKernel kernel) {
  return kernel == SimulationKernel::kCosineDistance ? "cosine_distance" : "cosine_similarity";
}

SimulationKernel parse_kernel(std::string_view name) {
  if (name == "cosine_distance") return SimulationKernel::kCosineDistance;
  if (name == "cosine_similarity") return SimulationKernel::kCosineSimilarity;
  throw std::invalid_argument("unknown kernel '" + std::string(name) +
                              "' (expected cosine_distance or cosine_similarity)");
}

Matrix kernel_matrix(const MaskMatrix& masks, SimulationKernel kernel) {
  const std::size_t l = masks.cols();
  Matrix a(masks.rows(), l);
  for (std::size_t j = 0; j < masks.rows(); ++j) {
    const double similarity = std::sqrt(static_cast<double>(masks.ones(j)) / static_cast<double>(l));
    const double weight =
        kernel == SimulationKernel::kCosineSimilarity ? similarity : 1.0 - similarity;
    if (!(weight > 0.0)) {
      throw std::invalid_argument("kernel matrix row " + std::to_string(j) +
                                  " has zero weight under " + std::string(kernel_name(kernel)));
    }
    const auto mask = masks.row(j);
    auto out = a.row(j);
    for (std::size_t i = 0; i < l; ++i) out[i] = weight * mask[i];
  }
  return a;
}

Matrix build_kernel_matrix(std::size_t tokens, std::size_t samples, std::uint64_t seed,
                           SimulationKernel kernel) {
  if (tokens < 2) throw std::invalid_argument("build_kernel_matrix: need l >= 2");
  if (samples < tokens) throw std::invalid_argument("build_kernel_matrix: need m >= l");
  return kernel_matrix(generate_masks(tokens, samples, seed, false), kernel);
}

std::vector<double> singular_values(const Matrix& a) { return jacobi_singular_values(a); }

double condition_number(const Matrix& a) {
  if (a.rows() < a.cols()) {
    throw RankDeficientError("condition_number: more columns than rows", a.rows());
  }
  const auto sv = singular_values(a);
  const double top = sv.front();
  const double cutoff = 1e-12 * top;
  const auto rank = static_cast<std::size_t>(
      std::count_if(sv.begin(), sv.end(), [&](double s) { return s > cutoff; }));
  if (top == 0.0 || sv.back() < cutoff) {
    throw RankDeficientError("condition_number: matrix is rank deficient (effective rank " +
                                 std::to_string(rank) + " of " + std::to_string(a.cols()) + ")",
                             rank);
  }
  return top / sv.back();
}

double ConditionReport::mean(std::size_t i) const {
  const auto& k = kappas.at(i);
  double sum = 0.0;
  for (double v : k) sum += v;
  return sum / static_cast<double>(k.size());
}

double ConditionReport::max(std::size_t i) const {
  const auto& k = kappas.at(i);
  return *std::max_element(k.begin(), k.end());
}

double ConditionReport::fraction_below(std::size_t i, double bound) const {
  const auto& k = kappas.at(i);
  const auto n = std::count_if(k.begin(), k.end(), [&](double v) { return v < bound; });
  return static_cast<double>(n) / static_cast<double>(k.size());
}

ConditionReport run_simulation(const SimulationOptions& options) {
  if (options.lengths.empty()) throw std::invalid_argument("run_simulation: no lengths");
  if (options.iterations == 0) throw std::invalid_argument("run_simulation: no iterations");
  ConditionReport report;
  report.options = options;
  report.kappas.assign(options.lengths.size(), std::vector<double>(options.iterations));

  const std::size_t total = options.lengths.size() * options.iterations;
  std::size_t threads = options.threads != 0 ? options.threads : std::thread::hardware_concurrency();
  threads = std::clamp<std::size_t>(threads, 1, total);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto work = [&] {
    for (std::size_t task = next++; task < total && !failed; task = next++) {
      const std::size_t li = task / options.iterations;
      const std::size_t it = task % options.iterations;
      const std::size_t l = options.lengths[li];
      try {
        const auto a =
            build_kernel_matrix(l, options.samples, derive_seed(options.seed, {l, it}), options.kernel);
        report.kappas[li][it] = condition_number(a);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t li = 0; li < options.lengths.size(); ++li) {
    const auto& k = report.kappas[li];
    const auto lo = static_cast<long>(std::floor(*std::min_element(k.begin(), k.end())));
    const auto hi = static_cast<long>(std::floor(*std::max_element(k.begin(), k.end())));
    for (long b = lo; b <= hi; ++b) {
      KappaBin bin{options.lengths[li], static_cast<double>(b), static_cast<double>(b + 1), 0};
      bin.count = static_cast<std::size_t>(std::count_if(
          k.begin(), k.end(), [&](double v) { return v >= bin.lo && v < bin.hi; }));
      report.bins.push_back(bin);
    }
  }
  return report;
}

void write_kappa_csv(std::ostream& out, const ConditionReport& report) {
  out << "length,iteration,kappa\n";
  for (std::size_t li = 0; li < report.kappas.size(); ++li) {
    for (std::size_t it = 0; it < report.kappas[li].size(); ++it) {
      out << report.options.lengths[li] << ',' << it << ',' << format_double(report.kappas[li][it])
          << '\n';
    }
  }
}

void write_kappa_bins_csv(std::ostream& out, const ConditionReport& report) {
  out << "length,bin_lo,bin_hi,count\n";
  for (const auto& b : report.bins) {
    out << b.length << ',' << format_double(b.lo) << ',' << format_double(b.hi) << ',' << b.count
        << '\n';
  }
}

}  // namespace expstab
