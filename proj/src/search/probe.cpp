#include "ostr/search.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace ostr {

namespace {

std::size_t skip_index(const SearchSpaceConfig& space) {
  for (std::size_t p = 0; p < space.op_count(); ++p) {
    if (space.ops[p] == OpKind::skip_connect) return p;
  }
  return space.op_count();
}

ProbeCheckpoint probe(const Supernet& net, std::size_t epoch, const std::vector<Batch>& batches) {
  const auto& space = net.config();
  ProbeCheckpoint c;
  c.epoch = epoch;
  c.beta = beta(net.arch());
  {
    PassOptions o;
    o.alpha_grad = true;
    c.diagnostics = edge_diagnostics(net.run(batches.front().images, batches.front().labels, o));
  }
  c.ostr = score_supernet(net, Criterion::ostr, batches);
  c.magnitude_pick = select_genotype(magnitude_scores(net.arch()), space);
  c.ostr_pick = select_genotype(c.ostr, space);
  const std::size_t skip = skip_index(space);
  for (std::size_t e = 0; e < space.edge_count(); ++e) {
    const bool mag_skip = c.magnitude_pick.choice[e] == skip;
    const bool ostr_skip = c.ostr_pick.choice[e] == skip;
    c.skip_edges_magnitude += mag_skip;
    c.skip_edges_ostr += ostr_skip;
    if (mag_skip && is_parametric(space.ops[c.ostr_pick.choice[e]])) c.flagged_edges.push_back(e);
  }
  return c;
}

std::string num(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

constexpr const char* kProbeHeader = "epoch,edge,op_kind,beta,rf_norm,strength,ostr_score,magnitude_pick,ostr_pick,flagged";

} // namespace

DegenerationReport degeneration_probe(const SearchConfig& base, const SearchSpaceConfig& space, const Dataset& data,
                                      std::vector<std::size_t> epochs_list) {
  if (epochs_list.empty()) throw std::invalid_argument("degeneration_probe: no checkpoint epochs");
  std::sort(epochs_list.begin(), epochs_list.end());
  epochs_list.erase(std::unique(epochs_list.begin(), epochs_list.end()), epochs_list.end());
  const std::size_t horizon = epochs_list.back();

  // Fixed-length run: selection every epoch, no early stop.
  SearchConfig cfg = base;
  cfg.epochs = std::max<std::size_t>(horizon, 1);
  cfg.max_epochs = std::max(cfg.max_epochs, cfg.epochs);
  cfg.patience = 0;
  cfg.eval_every_epoch = true;
  cfg.strict_alg1 = true;
  cfg.criterion = Criterion::magnitude;
  cfg.track = {Criterion::ostr};
  cfg.validate();

  const SearchData sd = split_for_search(data, cfg);
  const auto batches = make_batches(sd.alpha_split, cfg.batch_size, nullptr);

  DegenerationReport report;
  if (epochs_list.front() == 0) report.checkpoints.push_back(probe(Supernet::build(space, cfg.seed), 0, batches));
  if (horizon > 0) {
    SearchHooks hooks;
    hooks.on_epoch = [&](const EpochRecord& r, const Supernet& net, const OptimizerState&) {
      if (std::binary_search(epochs_list.begin(), epochs_list.end(), r.epoch)) {
        report.checkpoints.push_back(probe(net, r.epoch, batches));
      }
    };
    run_search(cfg, space, data, hooks);
  }

  const auto& cps = report.checkpoints;
  if (cps.size() >= 2) {
    std::size_t ok = 0;
    for (std::size_t i = 1; i < cps.size(); ++i) ok += cps[i].skip_edges_magnitude >= cps[i - 1].skip_edges_magnitude;
    report.magnitude_skip_nondecreasing = static_cast<double>(ok) / static_cast<double>(cps.size() - 1);
    const std::size_t skip = skip_index(space);
    for (std::size_t e = 0; e < space.edge_count(); ++e) {
      if (cps.back().magnitude_pick.choice[e] == skip && cps.front().magnitude_pick.choice[e] != skip &&
          cps.back().ostr_pick.choice[e] != skip) {
        report.magnitude_drifts_to_skip = true;
      }
    }
  }
  return report;
}

void write_degeneration_csv(std::ostream& os, const DegenerationReport& r, const SearchSpaceConfig& space) {
  os << kProbeHeader << '\n';
  for (const auto& c : r.checkpoints) {
    for (const auto& d : c.diagnostics) {
      const bool flagged = std::find(c.flagged_edges.begin(), c.flagged_edges.end(), d.edge) != c.flagged_edges.end();
      os << c.epoch << ',' << d.edge << ',' << op_name(space.ops.at(d.op)) << ',' << num(d.beta) << ','
         << num(d.rf_norm) << ',' << num(d.strength) << ',' << num(c.ostr.values(d.op, d.edge)) << ','
         << (c.magnitude_pick.choice[d.edge] == d.op) << ',' << (c.ostr_pick.choice[d.edge] == d.op) << ','
         << flagged << '\n';
    }
  }
}

void write_degeneration_summary_csv(std::ostream& os, const DegenerationReport& r) {
  os << "epoch,skip_edges_magnitude,skip_edges_ostr,flagged_edges,magnitude_genotype,ostr_genotype\n";
  for (const auto& c : r.checkpoints) {
    os << c.epoch << ',' << c.skip_edges_magnitude << ',' << c.skip_edges_ostr << ',' << c.flagged_edges.size() << ','
       << c.magnitude_pick.str() << ',' << c.ostr_pick.str() << '\n';
  }
}

void validate_degeneration_csv(std::istream& is, const SearchSpaceConfig& space) {
  auto fail = [](std::size_t line, const std::string& m) {
    throw std::runtime_error("degeneration csv line " + std::to_string(line) + ": " + m);
  };
  std::string line;
  if (!std::getline(is, line) || line != kProbeHeader) fail(1, "header must be '" + std::string(kProbeHeader) + "'");
  const std::size_t P = space.op_count(), E = space.edge_count();
  std::size_t n = 1, rows = 0;
  // Per (epoch, edge): count of rows, magnitude picks, ostr picks.
  std::map<std::pair<std::size_t, std::size_t>, std::array<std::size_t, 3>> groups;
  while (std::getline(is, line)) {
    ++n;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 10) fail(n, "expected 10 fields, got " + std::to_string(f.size()));
    std::size_t epoch = 0, edge = 0;
    try {
      epoch = std::stoul(f[0]);
      edge = std::stoul(f[1]);
    } catch (const std::exception&) {
      fail(n, "epoch and edge must be integers");
    }
    if (edge >= E) fail(n, "edge index out of range");
    try {
      parse_op_kind(f[2]);
    } catch (const std::exception&) {
      fail(n, "unknown op_kind '" + f[2] + "'");
    }
    for (int k = 3; k <= 6; ++k) {
      double v = 0.0;
      try {
        v = std::stod(f[static_cast<std::size_t>(k)]);
      } catch (const std::exception&) {
        fail(n, "non-numeric value");
      }
      if (!std::isfinite(v) || v < 0.0) fail(n, "values must be finite and non-negative");
    }
    for (int k = 7; k <= 9; ++k) {
      if (f[static_cast<std::size_t>(k)] != "0" && f[static_cast<std::size_t>(k)] != "1") fail(n, "flags must be 0 or 1");
    }
    auto& g = groups[{epoch, edge}];
    ++g[0];
    g[1] += f[7] == "1";
    g[2] += f[8] == "1";
    ++rows;
  }
  if (rows == 0) fail(n, "no data rows");
  for (const auto& [key, g] : groups) {
    if (g[0] != P || g[1] != 1 || g[2] != 1) {
      throw std::runtime_error("degeneration csv: epoch " + std::to_string(key.first) + " edge " +
                               std::to_string(key.second) + " needs one row per op and exactly one pick per criterion");
    }
  }
}

} // namespace ostr
