#include "ostr/json_util.hpp"
#include "ostr/search.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace ostr {

static_assert(std::endian::native == std::endian::little, "checkpoint payload is written as little-endian float64");

namespace {

constexpr const char* kFormat = "ostr-checkpoint";
constexpr int kVersion = 1;

void append(std::vector<double>& out, std::span<const double> v) { out.insert(out.end(), v.begin(), v.end()); }

std::string_view as_bytes(const std::vector<double>& v) {
  return {reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double)};
}

} // namespace

void save_checkpoint(const std::string& path, const Supernet& net, const OptimizerState& opt, const Json& meta) {
  std::vector<double> payload;
  append(payload, net.arch().alpha.values());
  std::size_t n_weights = 0;
  for (const auto* p : net.body().parameters()) {
    append(payload, p->values());
    n_weights += p->size();
  }
  if (opt.w_momentum.size() != n_weights || opt.alpha_m.size() != net.arch().alpha.size() ||
      opt.alpha_v.size() != net.arch().alpha.size()) {
    throw std::invalid_argument("save_checkpoint: optimizer state does not match the supernet");
  }
  append(payload, opt.w_momentum);
  append(payload, opt.alpha_m);
  append(payload, opt.alpha_v);

  Json header{{"format", kFormat},
              {"version", kVersion},
              {"space", to_json(net.config())},
              {"fingerprint", fingerprint(net.config())},
              {"counts",
               {{"alpha", net.arch().alpha.size()},
                {"weights", n_weights},
                {"w_momentum", opt.w_momentum.size()},
                {"alpha_m", opt.alpha_m.size()},
                {"alpha_v", opt.alpha_v.size()}}},
              {"alpha_step", opt.alpha_step},
              {"checksum", hex64(fnv1a64(as_bytes(payload)))},
              {"meta", meta}};

  // Write beside the target and rename so readers never see a torn file.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + tmp);
    os << header.dump() << '\n';
    const auto bytes = as_bytes(payload);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
  auto corrupt = [&](const std::string& m) -> std::runtime_error {
    return std::runtime_error("load_checkpoint: corrupt checkpoint " + path + ": " + m);
  };
  std::string line;
  if (!std::getline(is, line)) throw corrupt("missing header");
  Json h;
  try {
    h = Json::parse(line);
    check_fields(h, "checkpoint", {"format", "version", "space", "fingerprint", "counts", "alpha_step", "checksum", "meta"});
  } catch (const std::exception& e) {
    throw corrupt(e.what());
  }
  if (h["format"] != kFormat || h["version"] != kVersion) throw corrupt("unsupported format or version");

  SearchSpaceConfig space;
  try {
    space = space_from_json(h["space"]);
  } catch (const std::exception& e) {
    throw corrupt(e.what());
  }
  if (h["fingerprint"] != fingerprint(space)) throw corrupt("space fingerprint mismatch");

  Supernet net = Supernet::build(space, 0);
  OptimizerState opt = OptimizerState::zeros(net);
  std::size_t n_weights = 0;
  for (const auto* p : net.body().parameters()) n_weights += p->size();
  const auto& c = h["counts"];
  try {
    if (c.at("alpha").get<std::size_t>() != net.arch().alpha.size() || c.at("weights").get<std::size_t>() != n_weights ||
        c.at("w_momentum").get<std::size_t>() != n_weights || c.at("alpha_m").get<std::size_t>() != opt.alpha_m.size() ||
        c.at("alpha_v").get<std::size_t>() != opt.alpha_v.size()) {
      throw corrupt("section sizes do not match the space");
    }
  } catch (const nlohmann::json::exception& e) {
    throw corrupt(e.what());
  }

  const std::string bytes{std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
  const std::size_t total = 2 * n_weights + 3 * opt.alpha_m.size();
  if (bytes.size() != total * sizeof(double)) throw corrupt("payload size mismatch");
  if (hex64(fnv1a64(bytes)) != h["checksum"]) throw corrupt("checksum mismatch");
  std::vector<double> payload(total);
  std::memcpy(payload.data(), bytes.data(), bytes.size());

  std::size_t k = 0;
  auto fill = [&](std::span<double> dst) {
    for (double& x : dst) x = payload[k++];
  };
  fill(net.arch().alpha.values());
  for (auto* p : net.body().parameters()) fill(p->values());
  fill(opt.w_momentum);
  fill(opt.alpha_m);
  fill(opt.alpha_v);
  opt.alpha_step = h["alpha_step"].get<std::uint64_t>();
  return Checkpoint{std::move(net), std::move(opt), h["meta"]};
}

} // namespace ostr
