#include "pcgain/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pcgain/errors.hpp"
#include "pcgain/hash.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint layout assumes a little-endian host");

namespace pcgain {

namespace {

constexpr char kMagic[8] = {'P', 'C', 'G', 'C', 'K', 'P', 'T', '1'};

void append_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

void append_doubles(std::string& out, const double* p, std::size_t n) {
  out.append(reinterpret_cast<const char*>(p), n * sizeof(double));
}

}  // namespace

const nn::Net& Checkpoint::net(const std::string& name) const {
  for (const auto& [n, net] : nets)
    if (n == name) return net;
  throw DataError("checkpoint has no net named '" + name + "'");
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["kind"] = ckpt.kind;
  header["config"] = ckpt.config_json;
  nlohmann::json jnets = nlohmann::json::array();
  for (const auto& [name, net] : ckpt.nets) {
    nlohmann::json jlayers = nlohmann::json::array();
    for (const auto& layer : net.layers) {
      jlayers.push_back({{"in", layer.W.cols()},
                         {"out", layer.W.rows()},
                         {"act", nn::activation_name(layer.act)}});
    }
    jnets.push_back({{"name", name}, {"layers", jlayers}});
  }
  header["nets"] = jnets;
  const std::string htext = header.dump();

  std::string out;
  out.append(kMagic, sizeof(kMagic));
  append_u64(out, htext.size());
  out += htext;
  for (const auto& [name, net] : ckpt.nets) {
    (void)name;
    for (const auto& layer : net.layers) {
      // Eigen stores column-major; emit row-major so the layout is
      // self-evident from the header alone.
      for (Eigen::Index r = 0; r < layer.W.rows(); ++r) {
        Eigen::RowVectorXd row = layer.W.row(r);
        append_doubles(out, row.data(), static_cast<std::size_t>(row.size()));
      }
      append_doubles(out, layer.b.data(), static_cast<std::size_t>(layer.b.size()));
    }
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) + 8 ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw DataError("checkpoint: bad magic (not a checkpoint file?)");
  std::uint64_t hlen;
  std::memcpy(&hlen, bytes.data() + sizeof(kMagic), 8);
  std::size_t pos = sizeof(kMagic) + 8;
  if (pos + hlen > bytes.size()) throw DataError("checkpoint: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: corrupt header: ") + e.what());
  }
  pos += hlen;

  Checkpoint ckpt;
  ckpt.kind = header.at("kind").get<std::string>();
  ckpt.config_json = header.at("config").get<std::string>();
  for (const auto& jnet : header.at("nets")) {
    nn::Net net;
    for (const auto& jl : jnet.at("layers")) {
      nn::Layer layer;
      const auto out_w = jl.at("out").get<Eigen::Index>();
      const auto in_w = jl.at("in").get<Eigen::Index>();
      layer.act = nn::activation_from_name(jl.at("act").get<std::string>());
      layer.W.resize(out_w, in_w);
      const std::size_t wbytes = static_cast<std::size_t>(out_w * in_w) * sizeof(double);
      if (pos + wbytes + static_cast<std::size_t>(out_w) * sizeof(double) > bytes.size())
        throw DataError("checkpoint: truncated parameter payload");
      for (Eigen::Index r = 0; r < out_w; ++r) {
        Eigen::RowVectorXd row(in_w);
        std::memcpy(row.data(), bytes.data() + pos, static_cast<std::size_t>(in_w) * 8);
        layer.W.row(r) = row;
        pos += static_cast<std::size_t>(in_w) * 8;
      }
      layer.b.resize(out_w);
      std::memcpy(layer.b.data(), bytes.data() + pos, static_cast<std::size_t>(out_w) * 8);
      pos += static_cast<std::size_t>(out_w) * 8;
      net.layers.push_back(std::move(layer));
    }
    ckpt.nets.emplace_back(jnet.at("name").get<std::string>(), std::move(net));
  }
  if (pos != bytes.size()) throw DataError("checkpoint: trailing bytes after parameters");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot open '" + path + "' for writing");
  const std::string bytes = serialize_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("checkpoint: write failure on '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw DataError("checkpoint: read failure on '" + path + "'");
  return deserialize_checkpoint(buf.str());
}

std::string checkpoint_hash(const Checkpoint& ckpt) {
  Fnv64 h;
  h.update(serialize_checkpoint(ckpt));
  return h.hex();
}

}  // namespace pcgain
