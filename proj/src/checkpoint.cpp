#include "contrast/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "contrast/errors.hpp"

namespace contrast {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are written in host byte order");

namespace {

constexpr char kMagic[] = "CTRSTCKPT";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("checkpoint truncated reading " + what);
  return v;
}

}  // namespace

Checkpoint snapshot(const Model& model, std::int64_t iteration, const AdamState* adam, std::string rng_state) {
  Checkpoint c;
  c.config = model.config();
  for (const auto& [name, t] : model.params().entries())
    c.params.push_back({name, t.shape(), std::vector<double>(t.data().begin(), t.data().end())});
  if (adam) c.adam = *adam;
  c.iteration = iteration;
  c.rng_state = std::move(rng_state);
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::vector<const std::vector<double>*> payloads;
  nlohmann::json tables = nlohmann::json::array();
  std::uint64_t offset = 0;
  auto add_table = [&](const std::string& name, const Shape& shape, const std::vector<double>& values) {
    tables.push_back({{"name", name}, {"shape", shape}, {"offset", offset}, {"count", values.size()}});
    payloads.push_back(&values);
    offset += values.size() * sizeof(double);
  };
  for (const auto& p : ckpt.params) add_table(p.name, p.shape, p.values);
  nlohmann::json header{{"config", nlohmann::json::parse(model_config_to_json(ckpt.config))},
                        {"iteration", ckpt.iteration},
                        {"rng_state", ckpt.rng_state}};
  if (ckpt.adam) {
    if (ckpt.adam->m.size() != ckpt.params.size() || ckpt.adam->v.size() != ckpt.params.size())
      throw ContractError("save_checkpoint: optimizer state does not match parameter table");
    header["adam_step"] = ckpt.adam->step;
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
      add_table("adam.m." + ckpt.params[i].name, ckpt.params[i].shape, ckpt.adam->m[i]);
      add_table("adam.v." + ckpt.params[i].name, ckpt.params[i].shape, ckpt.adam->v[i]);
    }
  }
  header["tables"] = tables;
  const auto text = header.dump();

  // Write to a sibling temp file, then rename, so a crash never leaves a
  // half-written checkpoint under the final name.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + tmp.string() + " for writing");
    os.write(kMagic, kMagicLen);
    put<std::uint32_t>(os, kCheckpointVersion);
    put<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto* p : payloads) os.write(reinterpret_cast<const char*>(p->data()), static_cast<std::streamsize>(p->size() * sizeof(double)));
    if (!os) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  char magic[kMagicLen];
  if (!is.read(magic, kMagicLen) || std::memcmp(magic, kMagic, kMagicLen) != 0)
    throw FormatError(path.string() + " is not a checkpoint");
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  const auto header_len = get<std::uint64_t>(is, "header size");
  if (header_len > (1ull << 30)) throw FormatError("checkpoint header size implausible");
  std::string text(header_len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(header_len))) throw FormatError("checkpoint truncated in header");
  const auto base = static_cast<std::uint64_t>(is.tellg());
  is.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(is.tellg());

  Checkpoint c;
  try {
    auto header = nlohmann::json::parse(text);
    c.config = model_config_from_json(header.at("config").dump());
    c.iteration = header.at("iteration").get<std::int64_t>();
    c.rng_state = header.at("rng_state").get<std::string>();
    std::vector<NamedArray> m_tables, v_tables;
    for (const auto& t : header.at("tables")) {
      NamedArray a;
      a.name = t.at("name").get<std::string>();
      a.shape = t.at("shape").get<Shape>();
      const auto off = t.at("offset").get<std::uint64_t>();
      const auto count = t.at("count").get<std::uint64_t>();
      if (static_cast<std::uint64_t>(shape_numel(a.shape)) != count) throw FormatError("table '" + a.name + "' count/shape mismatch");
      if (base + off + count * sizeof(double) > file_size) throw FormatError("checkpoint truncated in table '" + a.name + "'");
      a.values.resize(count);
      is.seekg(static_cast<std::streamoff>(base + off));
      if (!is.read(reinterpret_cast<char*>(a.values.data()), static_cast<std::streamsize>(count * sizeof(double))))
        throw FormatError("checkpoint truncated in table '" + a.name + "'");
      if (a.name.rfind("adam.m.", 0) == 0)
        m_tables.push_back(std::move(a));
      else if (a.name.rfind("adam.v.", 0) == 0)
        v_tables.push_back(std::move(a));
      else
        c.params.push_back(std::move(a));
    }
    if (header.contains("adam_step")) {
      if (m_tables.size() != c.params.size() || v_tables.size() != c.params.size())
        throw FormatError("checkpoint optimizer tables incomplete");
      AdamState st;
      st.step = header.at("adam_step").get<std::int64_t>();
      for (std::size_t i = 0; i < c.params.size(); ++i) {
        if (m_tables[i].name != "adam.m." + c.params[i].name || v_tables[i].name != "adam.v." + c.params[i].name)
          throw FormatError("checkpoint optimizer tables out of order");
        st.m.push_back(std::move(m_tables[i].values));
        st.v.push_back(std::move(v_tables[i].values));
      }
      c.adam = std::move(st);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("bad checkpoint shape: ") + e.what());
  }
  return c;
}

void restore(Model& model, const Checkpoint& ckpt) {
  if (!(ckpt.config == model.config())) throw ConfigError("checkpoint config does not match model config");
  const auto& entries = model.params().entries();
  if (entries.size() != ckpt.params.size())
    throw ConfigError("checkpoint has " + std::to_string(ckpt.params.size()) + " tensors, model has " +
                      std::to_string(entries.size()));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [name, t] = entries[i];
    const auto& a = ckpt.params[i];
    if (a.name != name || a.shape != t.shape())
      throw ConfigError("checkpoint tensor '" + a.name + "' " + shape_str(a.shape) + " does not match '" + name + "' " +
                        shape_str(t.shape()));
    Tensor dst = t;
    auto d = dst.mutable_data();
    std::copy(a.values.begin(), a.values.end(), d.begin());
  }
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  Model m(ckpt.config, 0);
  restore(m, ckpt);
  return m;
}

}  // namespace contrast
