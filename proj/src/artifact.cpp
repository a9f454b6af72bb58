#include "hlglm/artifact.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hlglm/errors.hpp"
#include "hlglm/glm.hpp"

namespace hlglm {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'H', 'L', 'G', 'M'};

void put_u32(std::string& buf, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  buf.append(b, 4);
}

void put_u64(std::string& buf, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  buf.append(b, 8);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size())
      fail(ErrorCode::checksum_error, "model artifact is truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, buf.data() + pos, 8);
    pos += 8;
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

void put_doubles(std::string& buf, const double* v, std::size_t n) {
  buf.append(reinterpret_cast<const char*>(v), n * sizeof(double));
}

void put_tensor(std::string& buf, const Eigen::MatrixXd& t) {
  for (Eigen::Index r = 0; r < t.rows(); ++r)
    for (Eigen::Index c = 0; c < t.cols(); ++c)
      put_doubles(buf, &t(r, c), 1);
}

struct PayloadReader {
  Reader& r;
  std::uint64_t remaining;

  double next() {
    if (remaining == 0)
      fail(ErrorCode::ingest_error, "model artifact payload is too short");
    r.need(8);
    double v;
    std::memcpy(&v, r.buf.data() + r.pos, 8);
    r.pos += 8;
    --remaining;
    return v;
  }
  void fill(Eigen::MatrixXd& t) {
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j) t(i, j) = next();
  }
  void fill(Eigen::VectorXd& v, std::size_t n) {
    v.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = next();
  }
};

json part_empty_to_json(const PartPlan& part) {
  json out = json::array();
  for (const ComponentPenalty& c : part.comps) {
    json flags = json::array();
    for (std::uint8_t e : c.empty) flags.push_back(static_cast<int>(e));
    out.push_back(std::move(flags));
  }
  return out;
}

std::string write_bytes(const ModelArtifact& art) {
  const FittedModel& m = art.model;
  json h;
  h["format"] = "hlglm-model";
  h["tool"] = art.tool;
  h["config_hash"] = art.config_hash;
  h["family"] = {{"name", family_name(m.family.family)},
                 {"dispersion", m.family.dispersion}};
  h["lattice"] = lattice_to_json(m.lattice);
  h["intercept"] = {{"coef_dim", m.intercept.coef_dim()},
                    {"truncation", m.intercept.truncation()}};
  h["coeff"] = {{"coef_dim", m.coeff.coef_dim()},
                {"truncation", m.coeff.truncation()}};
  h["plan"] = {{"mode", m.plan.mode == PenaltyMode::per_component
                            ? "per-component"
                            : "per-parameter"},
               {"sigma", m.plan.sigma},
               {"intercept_empty", part_empty_to_json(m.plan.intercept)},
               {"coeff_empty", part_empty_to_json(m.plan.coeff)}};
  json fisher_int = json::array(), fisher_coef = json::array();
  for (const auto& v : m.fisher.intercept_wbar) fisher_int.push_back(v.size());
  for (const auto& v : m.fisher.coeff_wbar) fisher_coef.push_back(v.size());
  h["fisher"] = {{"global_wbar", m.fisher.global_wbar},
                 {"iterations", m.fisher.iterations},
                 {"last_delta", m.fisher.last_delta},
                 {"converged", m.fisher.converged},
                 {"intercept_sizes", std::move(fisher_int)},
                 {"coeff_sizes", std::move(fisher_coef)}};
  h["diag"] = {{"final_loss", m.diag.final_loss},
               {"train_nll", m.diag.train_nll},
               {"penalty", m.diag.penalty},
               {"steps", m.diag.steps},
               {"converged", m.diag.converged},
               {"df_intercept", m.diag.df_intercept},
               {"df_coeff", m.diag.df_coeff},
               {"df_total", m.diag.df_total}};
  h["zscore"] = {{"mean", art.zscore.mean}, {"sd", art.zscore.sd}};
  h["schema"] = {{"response", art.schema.response},
                 {"features", art.schema.features}};
  const std::string header = h.dump();

  std::string payload;
  const int ni = static_cast<int>(m.intercept.components().size());
  const int nc = static_cast<int>(m.coeff.components().size());
  for (int i = 0; i < ni; ++i) put_tensor(payload, m.intercept.tensor(i));
  for (int i = 0; i < nc; ++i) put_tensor(payload, m.coeff.tensor(i));
  for (const ComponentPenalty& c : m.plan.intercept.comps)
    put_doubles(payload, c.tau.data(), static_cast<std::size_t>(c.tau.size()));
  for (const ComponentPenalty& c : m.plan.coeff.comps)
    put_doubles(payload, c.tau.data(), static_cast<std::size_t>(c.tau.size()));
  for (const auto& v : m.fisher.intercept_wbar)
    put_doubles(payload, v.data(), static_cast<std::size_t>(v.size()));
  for (const auto& v : m.fisher.coeff_wbar)
    put_doubles(payload, v.data(), static_cast<std::size_t>(v.size()));

  std::string buf;
  buf.reserve(16 + header.size() + 8 + payload.size() + 8);
  buf.append(kMagic, 4);
  put_u32(buf, art.version);
  put_u64(buf, header.size());
  buf += header;
  put_u64(buf, payload.size() / sizeof(double));
  buf += payload;
  put_u64(buf, fnv1a64(buf.data(), buf.size()));
  return buf;
}

void read_part_plan(const json& empties, const DecomposedParameter& dp,
                    PayloadReader& pr, PartPlan& part) {
  const std::size_t nc = dp.components().size();
  if (empties.size() != nc)
    fail(ErrorCode::ingest_error,
         "model artifact penalty plan does not match the decomposition");
  part.comps.resize(nc);
  for (std::size_t i = 0; i < nc; ++i) {
    const auto n = static_cast<std::size_t>(dp.combo_count(static_cast<int>(i)));
    if (empties[i].size() != n)
      fail(ErrorCode::ingest_error,
           "model artifact penalty flags do not match combo counts");
    ComponentPenalty& c = part.comps[i];
    pr.fill(c.tau, n);
    c.empty.resize(n);
    for (std::size_t j = 0; j < n; ++j)
      c.empty[j] = static_cast<std::uint8_t>(empties[i][j].get<int>());
  }
}

}  // namespace

nlohmann::json lattice_to_json(const LatticeSpec& spec) {
  json dims = json::array();
  for (const LatticeDim& d : spec.dims()) {
    json j;
    j["name"] = d.name;
    j["kind"] = d.kind == DimKind::categorical ? "categorical" : "binned";
    j["levels"] = d.levels;
    j["edges"] = d.edges;
    j["labels"] = d.labels;
    dims.push_back(std::move(j));
  }
  return dims;
}

LatticeSpec lattice_from_json(const nlohmann::json& dims) {
  std::vector<LatticeDim> out;
  for (const json& j : dims) {
    LatticeDim d;
    d.name = j.at("name").get<std::string>();
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "categorical")
      d.kind = DimKind::categorical;
    else if (kind == "binned")
      d.kind = DimKind::binned_continuous;
    else
      fail(ErrorCode::ingest_error, "unknown lattice dim kind '" + kind + "'");
    d.levels = j.at("levels").get<int>();
    d.edges = j.at("edges").get<std::vector<double>>();
    d.labels = j.at("labels").get<std::vector<std::string>>();
    out.push_back(std::move(d));
  }
  return LatticeSpec(out);
}

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::string fnv1a_hex(const std::string& text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(
                    fnv1a64(text.data(), text.size())));
  return std::string(buf);
}

void save_model(const ModelArtifact& art, const std::string& path) {
  const std::string bytes = write_bytes(art);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::ingest_error, "cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) fail(ErrorCode::ingest_error, "short write to '" + path + "'");
}

ModelArtifact load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::ingest_error, "cannot open '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());

  if (buf.size() < 24 + 8)
    fail(ErrorCode::checksum_error, "model artifact is truncated");
  std::uint64_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
  if (fnv1a64(buf.data(), buf.size() - 8) != stored)
    fail(ErrorCode::checksum_error, "model artifact checksum mismatch");

  Reader r{buf};
  if (r.bytes(4) != std::string(kMagic, 4))
    fail(ErrorCode::ingest_error, "'" + path + "' is not a model artifact");
  ModelArtifact art;
  art.version = r.u32();
  if (art.version != kArtifactVersion)
    fail(ErrorCode::unsupported_version,
         "model artifact version " + std::to_string(art.version) +
             "; this build reads version " + std::to_string(kArtifactVersion));

  json h;
  try {
    h = json::parse(r.bytes(r.u64()));
  } catch (const json::exception& e) {
    fail(ErrorCode::ingest_error,
         std::string("model artifact header is not valid JSON: ") + e.what());
  }
  PayloadReader pr{r, r.u64()};

  try {
    FittedModel& m = art.model;
    m.family.family = family_from_name(h.at("family").at("name"));
    m.family.dispersion = h.at("family").at("dispersion").get<double>();
    m.lattice = lattice_from_json(h.at("lattice"));
    const std::vector<int> lv = m.lattice.level_counts();
    m.intercept = DecomposedParameter(
        lv, h.at("intercept").at("coef_dim").get<int>(),
        h.at("intercept").at("truncation").get<int>());
    m.coeff = DecomposedParameter(lv, h.at("coeff").at("coef_dim").get<int>(),
                                  h.at("coeff").at("truncation").get<int>());
    const int ni = static_cast<int>(m.intercept.components().size());
    const int nc = static_cast<int>(m.coeff.components().size());
    for (int i = 0; i < ni; ++i) pr.fill(m.intercept.tensor(i));
    for (int i = 0; i < nc; ++i) pr.fill(m.coeff.tensor(i));

    const json& plan = h.at("plan");
    const std::string mode = plan.at("mode").get<std::string>();
    if (mode == "per-component")
      m.plan.mode = PenaltyMode::per_component;
    else if (mode == "per-parameter")
      m.plan.mode = PenaltyMode::per_parameter;
    else
      fail(ErrorCode::ingest_error, "unknown penalty mode '" + mode + "'");
    m.plan.sigma = plan.at("sigma").get<double>();
    read_part_plan(plan.at("intercept_empty"), m.intercept, pr,
                   m.plan.intercept);
    read_part_plan(plan.at("coeff_empty"), m.coeff, pr, m.plan.coeff);

    const json& fisher = h.at("fisher");
    m.fisher.global_wbar = fisher.at("global_wbar").get<double>();
    m.fisher.iterations = fisher.at("iterations").get<int>();
    m.fisher.last_delta = fisher.at("last_delta").get<double>();
    m.fisher.converged = fisher.at("converged").get<bool>();
    for (const json& sz : fisher.at("intercept_sizes")) {
      Eigen::VectorXd v;
      pr.fill(v, sz.get<std::size_t>());
      m.fisher.intercept_wbar.push_back(std::move(v));
    }
    for (const json& sz : fisher.at("coeff_sizes")) {
      Eigen::VectorXd v;
      pr.fill(v, sz.get<std::size_t>());
      m.fisher.coeff_wbar.push_back(std::move(v));
    }

    const json& diag = h.at("diag");
    m.diag.final_loss = diag.at("final_loss").get<double>();
    m.diag.train_nll = diag.at("train_nll").get<double>();
    m.diag.penalty = diag.at("penalty").get<double>();
    m.diag.steps = diag.at("steps").get<int>();
    m.diag.converged = diag.at("converged").get<bool>();
    m.diag.df_intercept = diag.at("df_intercept").get<std::vector<double>>();
    m.diag.df_coeff = diag.at("df_coeff").get<std::vector<double>>();
    m.diag.df_total = diag.at("df_total").get<double>();

    art.zscore.mean = h.at("zscore").at("mean").get<std::vector<double>>();
    art.zscore.sd = h.at("zscore").at("sd").get<std::vector<double>>();
    art.schema.response = h.at("schema").at("response").get<std::string>();
    art.schema.features =
        h.at("schema").at("features").get<std::vector<std::string>>();
    art.config_hash = h.at("config_hash").get<std::string>();
    art.tool = h.at("tool").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::ingest_error,
         std::string("model artifact header is incomplete: ") + e.what());
  }
  if (pr.remaining != 0)
    fail(ErrorCode::ingest_error, "model artifact payload has trailing data");
  return art;
}

}  // namespace hlglm
