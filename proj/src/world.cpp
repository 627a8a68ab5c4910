#include "rlhflab/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "rlhflab/config.hpp"
#include "rlhflab/error.hpp"
#include "rlhflab/kernels.hpp"
#include "rlhflab/rng.hpp"

namespace rlhflab {

namespace {

// seed-stream tags for world construction
constexpr std::uint64_t kTagRho = 0x01;
constexpr std::uint64_t kTagRhoLabel = 0x02;
constexpr std::uint64_t kTagPiRef = 0x03;
constexpr std::uint64_t kTagReward = 0x04;

bool is_distribution(std::span<const double> p) {
  for (double v : p)
    if (!(v >= 0.0) || !std::isfinite(v)) return false;
  return std::fabs(kern::sum(p.data(), p.size()) - 1.0) <= kDistTol;
}

void draw_distribution(const WorldGen& gen, Rng& rng, std::span<double> out) {
  if (gen.dist_kind == DistKind::kUniform) {
    const double p = 1.0 / static_cast<double>(out.size());
    for (auto& v : out) v = p;
  } else {
    rng.dirichlet(gen.alpha, out);
  }
}

}  // namespace

WorldGen parse_world_gen(const std::string& text) {
  WorldGen gen;
  std::string spec = text;
  std::erase(spec, ' ');
  std::istringstream in(spec);
  std::string part;
  bool have_dist = false;
  while (std::getline(in, part, ',')) {
    if (part.empty()) continue;
    if (part == "uniform-all" || part == "uniform") {
      gen.dist_kind = DistKind::kUniform;
      have_dist = true;
    } else if (part.rfind("dirichlet(", 0) == 0 && part.back() == ')') {
      const std::string arg = part.substr(10, part.size() - 11);
      char* end = nullptr;
      const double alpha = std::strtod(arg.c_str(), &end);
      if (end == arg.c_str() || *end != '\0' || !(alpha > 0.0))
        throw Error("invalid world generator: bad dirichlet concentration '" + arg + "'");
      gen.dist_kind = DistKind::kDirichlet;
      gen.alpha = alpha;
      have_dist = true;
    } else if (part == "uniform-reward") {
      gen.reward_kind = RewardKind::kUniform;
    } else {
      throw Error("invalid world generator: unknown term '" + part + "'");
    }
  }
  if (!have_dist) throw Error("invalid world generator: no distribution term in '" + text + "'");
  return gen;
}

std::string world_gen_to_string(const WorldGen& gen) {
  std::string out;
  if (gen.dist_kind == DistKind::kUniform) {
    out = "uniform-all";
  } else {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "dirichlet(%.17g)", gen.alpha);
    out = buf;
  }
  return out + ", uniform-reward";
}

TabularWorld build_world(std::size_t n_prompts, std::size_t n_responses, const WorldGen& gen,
                         std::uint64_t seed) {
  if (n_prompts < 2 || n_responses < 2)
    throw Error("invalid world: need at least 2 prompts and 2 responses");
  TabularWorld world;
  world.n_prompts = n_prompts;
  world.n_responses = n_responses;
  world.rho.resize(n_prompts);
  world.rho_label.resize(n_prompts);
  world.pi_ref = Matrix(n_prompts, n_responses);
  world.r_star = Matrix(n_prompts, n_responses);

  Rng rho_rng(mix_seed(seed, kTagRho));
  draw_distribution(gen, rho_rng, world.rho);
  Rng label_rng(mix_seed(seed, kTagRhoLabel));
  draw_distribution(gen, label_rng, world.rho_label);
  for (std::size_t x = 0; x < n_prompts; ++x) {
    Rng row_rng(mix_seed(seed, kTagPiRef, x));
    draw_distribution(gen, row_rng, world.pi_ref.row(x));
  }
  Rng reward_rng(mix_seed(seed, kTagReward));
  for (std::size_t x = 0; x < n_prompts; ++x)
    for (double& r : world.r_star.row(x)) r = reward_rng.uniform01();

  validate_world(world);
  return world;
}

void validate_world(const TabularWorld& world) {
  if (world.n_prompts < 2 || world.n_responses < 2)
    throw Error("invalid world: need at least 2 prompts and 2 responses");
  if (world.rho.size() != world.n_prompts || world.rho_label.size() != world.n_prompts)
    throw Error("invalid world: prompt distribution size mismatch");
  if (world.pi_ref.rows() != world.n_prompts || world.pi_ref.cols() != world.n_responses)
    throw Error("invalid world: pi_ref shape mismatch");
  if (world.r_star.rows() != world.n_prompts || world.r_star.cols() != world.n_responses)
    throw Error("invalid world: r_star shape mismatch");
  if (!is_distribution(world.rho)) throw Error("invalid world: rho not normalised");
  if (!is_distribution(world.rho_label)) throw Error("invalid world: rho_label not normalised");
  for (std::size_t x = 0; x < world.n_prompts; ++x)
    if (!is_distribution(world.pi_ref.row(x)))
      throw Error("invalid world: pi_ref row " + std::to_string(x) + " not normalised");
  for (std::size_t x = 0; x < world.n_prompts; ++x)
    for (double v : world.r_star.row(x))
      if (!(v >= 0.0 && v <= 1.0))
        throw Error("invalid world: r_star entry outside [0,1] at prompt " + std::to_string(x));
}

void validate_reward_table(const Matrix& table, const TabularWorld& world) {
  if (table.rows() != world.n_prompts || table.cols() != world.n_responses)
    throw Error("reward table shape mismatch");
  for (std::size_t x = 0; x < table.rows(); ++x)
    for (double v : table.row(x))
      if (!(v >= 0.0 && v <= 1.0)) throw Error("reward entry outside [0,1]");
}

Policy policy_from_logits(Matrix logits) {
  for (std::size_t x = 0; x < logits.rows(); ++x)
    for (double v : logits.row(x))
      if (!std::isfinite(v)) throw Error("invalid logits");

  Policy policy;
  policy.probs = Matrix(logits.rows(), logits.cols());
  for (std::size_t x = 0; x < logits.rows(); ++x) {
    auto row = logits.row(x);
    const double peak = *std::max_element(row.begin(), row.end());
    auto out = policy.probs.row(x);
    double total = 0.0;
    for (std::size_t y = 0; y < row.size(); ++y) {
      out[y] = std::exp(row[y] - peak);
      total += out[y];
    }
    for (double& v : out) v /= total;
  }
  policy.logits = std::move(logits);
  return policy;
}

Matrix mixture_ref(std::span<const Policy> policies, std::span<const double> weights) {
  if (policies.empty() || policies.size() != weights.size())
    throw Error("invalid mixture weights");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error("invalid mixture weights");
    total += w;
  }
  if (std::fabs(total - 1.0) > kDistTol) throw Error("invalid mixture weights");
  const Matrix& first = policies.front().probs;
  Matrix out(first.rows(), first.cols(), 0.0);
  for (std::size_t m = 0; m < policies.size(); ++m) {
    const Matrix& probs = policies[m].probs;
    if (!probs.same_shape(first)) throw Error("mixture component shape mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += weights[m] * probs.data()[i];
  }
  return out;
}

JointDist joint(const Vector& prompt_dist, const Matrix& response_rows) {
  if (prompt_dist.size() != response_rows.rows())
    throw Error("joint: prompt distribution / response matrix shape mismatch");
  JointDist dist;
  dist.mass = Matrix(response_rows.rows(), response_rows.cols());
  for (std::size_t x = 0; x < response_rows.rows(); ++x) {
    auto in = response_rows.row(x);
    auto out = dist.mass.row(x);
    for (std::size_t y = 0; y < in.size(); ++y) out[y] = prompt_dist[x] * in[y];
  }
  return dist;
}

TabularWorld world_from_config_text(const std::string& text, const std::string& name) {
  const auto entries = parse_config_text(text, name);
  long n_prompts = -1;
  long n_responses = -1;
  std::string generator;
  std::string reward;
  std::uint64_t seed = 0;
  bool have_seed = false;
  Vector rho, rho_label;
  std::map<long, std::vector<double>> pi_ref_rows, r_star_rows;
  int first_line = entries.empty() ? 0 : entries.front().line;

  for (const auto& entry : entries) {
    if (entry.key == "n_prompts") {
      n_prompts = config_long(entry, name);
    } else if (entry.key == "n_responses") {
      n_responses = config_long(entry, name);
    } else if (entry.key == "generator") {
      generator = entry.value;
    } else if (entry.key == "reward") {
      reward = entry.value;
    } else if (entry.key == "seed") {
      seed = static_cast<std::uint64_t>(config_long(entry, name));
      have_seed = true;
    } else if (entry.key == "rho") {
      rho = config_doubles(entry, name);
    } else if (entry.key == "rho_label") {
      rho_label = config_doubles(entry, name);
    } else if (entry.key == "pi_ref" && entry.index >= 0) {
      pi_ref_rows[entry.index] = config_doubles(entry, name);
    } else if (entry.key == "r_star" && entry.index >= 0) {
      r_star_rows[entry.index] = config_doubles(entry, name);
    } else {
      throw Error(name + ":" + std::to_string(entry.line) + ": unknown key '" + entry.key + "'");
    }
  }

  if (n_prompts < 2 || n_responses < 2)
    throw Error(name + ":" + std::to_string(first_line) +
                ": invalid world: need n_prompts >= 2 and n_responses >= 2");

  const bool generator_mode = !generator.empty();
  if (generator_mode) {
    WorldGen gen = parse_world_gen(reward.empty() ? generator : generator + "," + reward);
    if (!have_seed)
      throw Error(name + ":" + std::to_string(first_line) + ": generator worlds need a seed");
    return build_world(static_cast<std::size_t>(n_prompts),
                       static_cast<std::size_t>(n_responses), gen, seed);
  }

  TabularWorld world;
  world.n_prompts = static_cast<std::size_t>(n_prompts);
  world.n_responses = static_cast<std::size_t>(n_responses);
  auto take_vector = [&](Vector& dst, Vector& src, const char* key) {
    if (src.size() != world.n_prompts)
      throw Error(name + ": invalid world: '" + key + "' needs " +
                  std::to_string(world.n_prompts) + " entries");
    dst = std::move(src);
  };
  take_vector(world.rho, rho, "rho");
  if (rho_label.empty()) rho_label = world.rho;  // defaults to rho when omitted
  take_vector(world.rho_label, rho_label, "rho_label");
  auto take_matrix = [&](Matrix& dst, std::map<long, std::vector<double>>& rows,
                         const char* key) {
    dst = Matrix(world.n_prompts, world.n_responses);
    for (std::size_t x = 0; x < world.n_prompts; ++x) {
      auto it = rows.find(static_cast<long>(x));
      if (it == rows.end() || it->second.size() != world.n_responses)
        throw Error(name + ": invalid world: '" + std::string(key) + "[" + std::to_string(x) +
                    "]' missing or wrong length");
      std::copy(it->second.begin(), it->second.end(), dst.row(x).begin());
    }
  };
  take_matrix(world.pi_ref, pi_ref_rows, "pi_ref");
  take_matrix(world.r_star, r_star_rows, "r_star");
  validate_world(world);
  return world;
}

TabularWorld load_world_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open world file: " + path);
  std::ostringstream body;
  body << in.rdbuf();
  return world_from_config_text(body.str(), path);
}

std::string world_to_config_text(const TabularWorld& world) {
  std::ostringstream out;
  char buf[32];
  auto emit = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << ' ' << buf;
  };
  out << "n_prompts = " << world.n_prompts << "\n";
  out << "n_responses = " << world.n_responses << "\n";
  out << "rho =";
  for (double v : world.rho) emit(v);
  out << "\nrho_label =";
  for (double v : world.rho_label) emit(v);
  out << "\n";
  for (std::size_t x = 0; x < world.n_prompts; ++x) {
    out << "pi_ref[" << x << "] =";
    for (double v : world.pi_ref.row(x)) emit(v);
    out << "\n";
  }
  for (std::size_t x = 0; x < world.n_prompts; ++x) {
    out << "r_star[" << x << "] =";
    for (double v : world.r_star.row(x)) emit(v);
    out << "\n";
  }
  return out.str();
}

}  // namespace rlhflab
