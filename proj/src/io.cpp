#include "failcal/io.hpp"

#include "failcal/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace failcal {

// ---------------------------------------------------------------------------
// CSV

std::size_t Table::column(const std::string &name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ValidationError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

bool Table::has(const std::string &name) const { return std::find(header.begin(), header.end(), name) != header.end(); }

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string &line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

std::ifstream open_in(const fs::path &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return in;
}

std::ofstream open_out(const fs::path &path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    return out;
}

}  // namespace

void write_json(const fs::path &path, const json &j) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

json read_json(const fs::path &path) {
    auto in = open_in(path);
    try {
        return json::parse(in);
    } catch (const json::exception &e) {
        throw ValidationError("malformed JSON in '" + path.string() + "': " + e.what());
    }
}


Table read_csv(const fs::path &path) {
    auto in = open_in(path);
    Table t;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto cells = split(line);
        if (t.header.empty()) {
            t.header = std::move(cells);
            continue;
        }
        if (cells.size() != t.header.size()) {
            throw ValidationError(path.filename().string() + " line " + std::to_string(lineno) + ": expected " +
                                  std::to_string(t.header.size()) + " fields, found " + std::to_string(cells.size()));
        }
        std::vector<double> row(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const auto &s = cells[c];
            const auto res = std::from_chars(s.data(), s.data() + s.size(), row[c]);
            if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
                throw ValidationError(path.filename().string() + " line " + std::to_string(lineno) + ": '" + s +
                                      "' in column " + t.header[c] + " is not a number");
            }
        }
        t.rows.push_back(std::move(row));
    }
    if (t.header.empty()) throw ValidationError(path.filename().string() + ": empty file");
    return t;
}

void write_csv(const fs::path &path, const Table &table) {
    auto out = open_out(path);
    for (std::size_t c = 0; c < table.header.size(); ++c) out << (c ? "," : "") << table.header[c];
    out << '\n';
    for (const auto &row : table.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << format_double(row[c]);
        out << '\n';
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Hashing and JSON helpers

std::uint64_t fnv1a(const std::string &s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static const char *digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[std::size_t(i)] = digits[v & 0xf];
    return s;
}

json vector_to_json(const Eigen::VectorXd &v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const json &j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json matrix_to_json(const Eigen::MatrixXd &m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vector_to_json(m.row(r).transpose()));
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json &j) {
    const auto n = static_cast<Eigen::Index>(j.size());
    if (n == 0) return {};
    const auto c = static_cast<Eigen::Index>(j[0].size());
    Eigen::MatrixXd m(n, c);
    for (Eigen::Index r = 0; r < n; ++r) {
        if (static_cast<Eigen::Index>(j[std::size_t(r)].size()) != c) throw IoError("ragged matrix in JSON");
        m.row(r) = vector_from_json(j[std::size_t(r)]).transpose();
    }
    return m;
}

PriorSpec prior_from_json(const json &j) {
    const std::string type = j.value("type", "uniform");
    const double a = j.at("lower").get<double>();
    const double b = j.at("upper").get<double>();
    if (type == "uniform") return PriorSpec::uniform(a, b);
    if (type == "trunc_normal" || type == "trnorm") {
        return PriorSpec::trunc_normal(j.at("mean").get<double>(), j.at("variance").get<double>(), a, b);
    }
    if (type == "scaled_beta" || type == "beta") {
        return PriorSpec::scaled_beta(j.at("alpha").get<double>(), j.at("beta").get<double>(), a, b);
    }
    throw ValidationError("unknown prior type '" + type + "'");
}

json prior_to_json(const PriorSpec &p) {
    json j{{"lower", p.lower}, {"upper", p.upper}};
    switch (p.kind) {
    case PriorKind::Uniform:
        j["type"] = "uniform";
        break;
    case PriorKind::TruncNormal:
        j["type"] = "trunc_normal";
        j["mean"] = p.mean;
        j["variance"] = p.variance;
        break;
    case PriorKind::ScaledBeta:
        j["type"] = "scaled_beta";
        j["alpha"] = p.alpha;
        j["beta"] = p.beta;
        break;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Configuration

void set_path(json &doc, const std::string &dotted, json value) {
    json *node = &doc;
    std::size_t start = 0;
    for (;;) {
        const auto pos = dotted.find('.', start);
        const std::string key = dotted.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
        if (key.empty()) throw InvalidArgument("empty component in key '" + dotted + "'");
        if (!node->is_object()) *node = json::object();
        if (pos == std::string::npos) {
            (*node)[key] = std::move(value);
            return;
        }
        node = &(*node)[key];
        start = pos + 1;
    }
}

namespace {

McmcSection parse_mcmc(const json &base, const json &section) {
    json merged = base.is_object() ? base : json::object();
    if (section.is_object() && section.contains("mcmc")) merged.update(section.at("mcmc"));
    McmcSection m;
    m.run.iterations = merged.value("iterations", 10000L);
    m.run.burnin = merged.value("burnin", 2000L);
    m.run.thin = merged.value("thin", 1L);
    m.run.freeze_after_burnin = merged.value("freeze_after_burnin", false);
    m.initial_sd = merged.value("initial_sd", 0.1);
    m.adaptation.start = merged.value("adapt_start", 1000L);
    m.adaptation.epsilon = merged.value("adapt_epsilon", 1e-6);
    m.run.validate();
    if (!(m.initial_sd > 0.0)) throw ValidationError("initial_sd must be positive");
    return m;
}

const json &section_of(const json &doc, const char *name) {
    static const json empty = json::object();
    auto it = doc.find(name);
    return it == doc.end() ? empty : *it;
}

}  // namespace

CalibrationModel AnalysisConfig::calibration_model() const {
    CalibrationModel m;
    m.eta_family = eta_family;
    m.delta_family = delta_family;
    m.theta_priors = t_priors;
    m.theta_names = t_names;
    return m;
}

LatentModel AnalysisConfig::latent_model() const {
    LatentModel m;
    m.family = latent_family;
    m.mode = mode;
    m.dx = dx();
    m.dt = dt();
    return m;
}

std::uint64_t AnalysisConfig::hash() const { return fnv1a(raw.dump()); }

AnalysisConfig parse_config(const json &doc, const fs::path &base_dir) {
    AnalysisConfig c;
    c.raw = doc;
    c.base_dir = base_dir;
    try {
        const json &data = section_of(doc, "data");
        c.field_path = base_dir / data.value("field", "field.csv");
        c.simulator_path = base_dir / data.value("simulator", "simulator.csv");
        c.failures_path = base_dir / data.value("failures", "failures.csv");

        const json &inputs = doc.at("inputs");
        for (const auto &x : inputs.at("x")) {
            InputRange r{x.at("name").get<std::string>(), x.value("lower", 0.0), x.value("upper", 1.0)};
            if (!(r.lower < r.upper)) throw ValidationError("input '" + r.name + "' needs lower < upper");
            c.x_inputs.push_back(r);
        }
        for (const auto &t : inputs.at("t")) {
            c.t_names.push_back(t.at("name").get<std::string>());
            c.t_priors.push_back(prior_from_json(t.at("prior")));
        }
        if (c.t_priors.empty()) throw ValidationError("at least one calibration input is required");

        c.seed = doc.value("seed", std::uint64_t{1});
        c.chains = doc.value("chains", 1);
        c.threads = doc.value("threads", 1u);
        if (c.chains < 1) throw ValidationError("chains must be at least 1");

        const json base = doc.value("mcmc", json::object());
        const json &cls = section_of(doc, "classifier");
        const json &cal = section_of(doc, "calibration");
        const json &cpl = section_of(doc, "coupled");
        c.classifier_mcmc = parse_mcmc(base, cls);
        c.calibration_mcmc = parse_mcmc(base, cal);
        c.coupled_mcmc = parse_mcmc(base, cpl);

        c.eta_family = parse_family(cal.value("eta_kernel", "sqexp"));
        c.delta_family = parse_family(cal.value("delta_kernel", "sqexp"));
        c.latent_family = parse_family(cls.value("kernel", "matern32"));
        c.mode = parse_slice_mode(cls.value("mode", "c2"));
        c.loocv_stride = cls.value("loocv_stride", 200L);
        c.record_latent = cls.value("record_latent", true);
        if (c.loocv_stride < 0) throw ValidationError("loocv_stride must be nonnegative");

        const json &adm = section_of(doc, "admissibility");
        c.p_tol = adm.value("ptol", 0.0);
        const std::string xt = adm.value("xtilde", "lhs");
        if (xt == "grid") {
            c.xtilde = XtildeKind::Grid;
        } else if (xt == "lhs") {
            c.xtilde = XtildeKind::Lhs;
        } else {
            throw ValidationError("xtilde must be 'grid' or 'lhs'");
        }
        c.xtilde_size = adm.value("xtilde_size", Eigen::Index{200});
        if (!(c.p_tol >= 0.0 && c.p_tol <= 1.0)) throw ValidationError("ptol must lie in [0, 1]");
        if (c.xtilde_size < 1) throw ValidationError("xtilde_size must be positive");

        const json &bm = section_of(doc, "bmatrix");
        c.bmatrix_latent_draws = bm.value("latent_draws", 200L);
        c.bmatrix_theta_draws = bm.value("theta_draws", 500L);
        c.low_cut = bm.value("low_cut", 0.1);
        c.high_cut = bm.value("high_cut", 0.9);
        if (c.bmatrix_latent_draws < 1 || c.bmatrix_theta_draws < 1) {
            throw ValidationError("bmatrix draw counts must be positive");
        }

        const json &warm = section_of(doc, "warm_start");
        if (warm.contains("classifier")) c.warm_classifier = base_dir / warm.at("classifier").get<std::string>();
        if (warm.contains("calibration")) c.warm_calibration = base_dir / warm.at("calibration").get<std::string>();
    } catch (const json::exception &e) {
        throw ValidationError(std::string("configuration: ") + e.what());
    }
    return c;
}

AnalysisConfig load_config(const fs::path &path) {
    const json doc = read_json(path);
    return parse_config(doc, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

// ---------------------------------------------------------------------------
// Datasets

namespace {

Design take_columns(const Table &t, const std::vector<std::string> &names, const fs::path &file) {
    Design d(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(names.size()));
    for (std::size_t k = 0; k < names.size(); ++k) {
        if (!t.has(names[k])) throw ValidationError(file.filename().string() + ": missing column '" + names[k] + "'");
        const std::size_t c = t.column(names[k]);
        for (std::size_t r = 0; r < t.rows.size(); ++r) d(Eigen::Index(r), Eigen::Index(k)) = t.rows[r][c];
    }
    return d;
}

Eigen::VectorXd take_column(const Table &t, std::initializer_list<const char *> names, const fs::path &file) {
    for (const char *n : names) {
        if (!t.has(n)) continue;
        const std::size_t c = t.column(n);
        Eigen::VectorXd v(static_cast<Eigen::Index>(t.rows.size()));
        for (std::size_t r = 0; r < t.rows.size(); ++r) v[Eigen::Index(r)] = t.rows[r][c];
        return v;
    }
    throw ValidationError(file.filename().string() + ": missing output column '" + *names.begin() + "'");
}

std::vector<std::string> x_names(const AnalysisConfig &cfg) {
    std::vector<std::string> n;
    for (const auto &x : cfg.x_inputs) n.push_back(x.name);
    return n;
}

/// Scales in place; `row_offset` converts indices to 1-based data rows.
void scale_columns(Design &d, Eigen::Index col0, const std::vector<double> &lo, const std::vector<double> &hi,
                   const std::vector<std::string> &names, const std::string &file) {
    for (Eigen::Index r = 0; r < d.rows(); ++r) {
        for (std::size_t k = 0; k < lo.size(); ++k) {
            double &v = d(r, col0 + Eigen::Index(k));
            if (!(v >= lo[k] && v <= hi[k])) {
                std::ostringstream os;
                os << file << " row " << (r + 1) << ": " << names[k] << " = " << format_double(v) << " outside ["
                   << format_double(lo[k]) << ", " << format_double(hi[k]) << "]";
                throw ValidationError(os.str());
            }
            v = (v - lo[k]) / (hi[k] - lo[k]);
        }
    }
}

}  // namespace

RawData read_raw_data(const AnalysisConfig &cfg) {
    RawData raw;
    const auto xn = x_names(cfg);
    std::vector<std::string> xt = xn;
    xt.insert(xt.end(), cfg.t_names.begin(), cfg.t_names.end());

    const Table field = read_csv(cfg.field_path);
    raw.y = take_column(field, {"y"}, cfg.field_path);
    raw.x = take_columns(field, xn, cfg.field_path);

    const Table sim = read_csv(cfg.simulator_path);
    raw.eta = take_column(sim, {"eta", "y"}, cfg.simulator_path);
    const Design s = take_columns(sim, xt, cfg.simulator_path);
    raw.xstar = s.leftCols(cfg.dx());
    raw.tstar = s.rightCols(cfg.dt());

    if (fs::exists(cfg.failures_path)) {
        const Table fl = read_csv(cfg.failures_path);
        raw.fail_design = take_columns(fl, xt, cfg.failures_path);
        const Eigen::VectorXd z = take_column(fl, {"z"}, cfg.failures_path);
        raw.z.resize(std::size_t(z.size()));
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            if (z[i] != 0.0 && z[i] != 1.0) {
                throw ValidationError(cfg.failures_path.filename().string() + " row " + std::to_string(i + 1) +
                                      ": z must be 0 or 1");
            }
            raw.z[std::size_t(i)] = static_cast<int>(z[i]);
        }
    }
    return raw;
}

void write_raw_data(const RawData &raw, const fs::path &dir, const std::vector<std::string> &xn,
                    const std::vector<std::string> &tn) {
    Table field;
    field.header = {"y"};
    field.header.insert(field.header.end(), xn.begin(), xn.end());
    for (Eigen::Index r = 0; r < raw.y.size(); ++r) {
        std::vector<double> row{raw.y[r]};
        for (Eigen::Index c = 0; c < raw.x.cols(); ++c) row.push_back(raw.x(r, c));
        field.rows.push_back(std::move(row));
    }
    write_csv(dir / "field.csv", field);

    Table sim;
    sim.header = {"eta"};
    sim.header.insert(sim.header.end(), xn.begin(), xn.end());
    sim.header.insert(sim.header.end(), tn.begin(), tn.end());
    for (Eigen::Index r = 0; r < raw.eta.size(); ++r) {
        std::vector<double> row{raw.eta[r]};
        for (Eigen::Index c = 0; c < raw.xstar.cols(); ++c) row.push_back(raw.xstar(r, c));
        for (Eigen::Index c = 0; c < raw.tstar.cols(); ++c) row.push_back(raw.tstar(r, c));
        sim.rows.push_back(std::move(row));
    }
    write_csv(dir / "simulator.csv", sim);

    Table fl;
    fl.header = xn;
    fl.header.insert(fl.header.end(), tn.begin(), tn.end());
    fl.header.push_back("z");
    for (Eigen::Index r = 0; r < raw.fail_design.rows(); ++r) {
        std::vector<double> row;
        for (Eigen::Index c = 0; c < raw.fail_design.cols(); ++c) row.push_back(raw.fail_design(r, c));
        row.push_back(raw.z[std::size_t(r)]);
        fl.rows.push_back(std::move(row));
    }
    write_csv(dir / "failures.csv", fl);
}

Datasets prepare_datasets(const RawData &raw, const AnalysisConfig &cfg) {
    std::vector<double> xlo, xhi, tlo, thi;
    for (const auto &x : cfg.x_inputs) {
        xlo.push_back(x.lower);
        xhi.push_back(x.upper);
    }
    for (const auto &p : cfg.t_priors) {
        tlo.push_back(p.lower);
        thi.push_back(p.upper);
    }
    const auto xn = x_names(cfg);
    const std::string field = cfg.field_path.filename().string();
    const std::string sim = cfg.simulator_path.filename().string();
    const std::string fail = cfg.failures_path.filename().string();

    Datasets out;
    CalibrationDataset &c = out.calibration;
    c.x = raw.x;
    c.xstar = raw.xstar;
    c.tstar = raw.tstar;
    scale_columns(c.x, 0, xlo, xhi, xn, field);
    scale_columns(c.xstar, 0, xlo, xhi, xn, sim);
    scale_columns(c.tstar, 0, tlo, thi, cfg.t_names, sim);

    Eigen::VectorXd d(raw.y.size() + raw.eta.size());
    d << raw.y, raw.eta;
    if (d.size() < 2) throw ValidationError("need at least two outputs to standardize");
    const double mean = d.mean();
    const double sd = std::sqrt((d.array() - mean).square().sum() / static_cast<double>(d.size() - 1));
    if (!(sd > 0.0)) throw ValidationError("outputs have zero sample standard deviation");
    c.output_scale = sd;
    c.y = raw.y / sd;
    c.eta = raw.eta / sd;
    c.validate();

    FailureDataset &f = out.failures;
    f.dx = cfg.dx();
    f.dt = cfg.dt();
    f.z = raw.z;
    f.design = raw.fail_design;
    if (f.design.size() > 0) {
        scale_columns(f.design, 0, xlo, xhi, xn, fail);
        scale_columns(f.design, cfg.dx(), tlo, thi, cfg.t_names, fail);
    } else {
        f.design.resize(0, cfg.dx() + cfg.dt());
    }
    f.canonicalize();
    f.validate(false);
    return out;
}

// ---------------------------------------------------------------------------
// Toy problem

double toy_discrepancy(double x) { return 0.1 * (x - 0.2) * (x - 0.2) - 0.5 * (x - 0.2); }

std::vector<std::pair<int, int>> toy_failure_cells(const ToySpec &spec) {
    std::vector<std::pair<int, int>> cells;
    if (!spec.failures) return cells;
    if (!spec.failure_cells.empty()) {
        for (auto [x, t] : spec.failure_cells) {
            if (x < 0 || t < 0 || x >= spec.nx || t >= spec.nt) throw InvalidArgument("toy failure cell outside the grid");
        }
        return spec.failure_cells;
    }
    if (spec.nx != 18 || spec.nt != 8) throw InvalidArgument("toy failure pattern is defined for the 18 x 8 grid");
    // Low-t blob in the low-x corner, high-t blob in the high-x corner.
    auto run = [&](int t, int x0, int x1) {
        for (int x = x0; x <= x1; ++x) cells.emplace_back(x, t);
    };
    run(0, 0, 9);
    run(1, 0, 4);
    run(7, 8, 17);
    run(6, 13, 17);
    return cells;
}

ToyData generate_toy(const ToySpec &spec) {
    if (spec.nx < 2 || spec.nt < 2) throw InvalidArgument("toy grid needs at least 2 x 2 points");
    Rng rng(derive_seed(spec.seed, {stream::toy}));
    const Eigen::Index nx = spec.nx, nt = spec.nt, m_tot = nx * nt;

    // Grid points (x-major within each t row) then the field points at theta.
    Design pts(m_tot + nx, 2);
    for (Eigen::Index j = 0; j < nt; ++j) {
        for (Eigen::Index i = 0; i < nx; ++i) {
            pts(j * nx + i, 0) = static_cast<double>(i) / static_cast<double>(nx - 1);
            pts(j * nx + i, 1) = static_cast<double>(j) / static_cast<double>(nt - 1);
        }
    }
    for (Eigen::Index i = 0; i < nx; ++i) {
        pts(m_tot + i, 0) = static_cast<double>(i) / static_cast<double>(nx - 1);
        pts(m_tot + i, 1) = spec.theta;
    }
    Eigen::Vector2d lam(spec.lambda_x, spec.lambda_t);
    const Eigen::MatrixXd k = cov_matrix(ProductKernel(CorrelationFamily::SquaredExponential, lam, spec.var_eta), pts);
    // Eigen square root: the smooth kernel is numerically singular, so clip tiny negative eigenvalues.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
    const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    Eigen::VectorXd zn(pts.rows());
    for (Eigen::Index i = 0; i < zn.size(); ++i) zn[i] = rng.normal();
    const Eigen::VectorXd eta = es.eigenvectors() * root.cwiseProduct(zn);

    std::vector<int> z(std::size_t(m_tot), 1);
    for (auto [xi, tj] : toy_failure_cells(spec)) z[std::size_t(tj * nx + xi)] = 0;

    ToyData out;
    RawData &raw = out.raw;
    raw.x = pts.block(m_tot, 0, nx, 1);
    raw.y.resize(nx);
    const double sd_eps = std::sqrt(spec.var_eps);
    for (Eigen::Index i = 0; i < nx; ++i) {
        raw.y[i] = eta[m_tot + i] + toy_discrepancy(raw.x(i, 0)) + sd_eps * rng.normal();
    }
    const auto m = static_cast<Eigen::Index>(std::count(z.begin(), z.end(), 1));
    raw.eta.resize(m);
    raw.xstar.resize(m, 1);
    raw.tstar.resize(m, 1);
    Eigen::Index k_out = 0;
    for (Eigen::Index r = 0; r < m_tot; ++r) {
        if (z[std::size_t(r)] != 1) continue;
        raw.eta[k_out] = eta[r];
        raw.xstar(k_out, 0) = pts(r, 0);
        raw.tstar(k_out, 0) = pts(r, 1);
        ++k_out;
    }
    raw.fail_design = pts.topRows(m_tot);
    raw.z = z;

    ToyTruth &tr = out.truth;
    tr.theta = spec.theta;
    tr.n = nx;
    tr.m = m;
    tr.m0 = m_tot - m;
    std::vector<bool> row_fails(std::size_t(nt), false);
    for (Eigen::Index r = 0; r < m_tot; ++r) {
        if (z[std::size_t(r)] == 0) row_fails[std::size_t(r / nx)] = true;
    }
    auto tval = [&](Eigen::Index j) { return static_cast<double>(j) / static_cast<double>(nt - 1); };
    tr.band_lower = 0.0;
    tr.band_upper = 1.0;
    tr.success_lower = 0.0;
    tr.success_upper = 1.0;
    for (Eigen::Index j = 0; j < nt; ++j) {
        if (row_fails[std::size_t(j)] && tval(j) < spec.theta) tr.band_lower = tval(j);
    }
    for (Eigen::Index j = nt - 1; j >= 0; --j) {
        if (row_fails[std::size_t(j)] && tval(j) > spec.theta) tr.band_upper = tval(j);
    }
    for (Eigen::Index j = 0; j < nt; ++j) {
        if (!row_fails[std::size_t(j)] && tval(j) > tr.band_lower) {
            tr.success_lower = tval(j);
            break;
        }
    }
    for (Eigen::Index j = nt - 1; j >= 0; --j) {
        if (!row_fails[std::size_t(j)] && tval(j) < tr.band_upper) {
            tr.success_upper = tval(j);
            break;
        }
    }
    return out;
}

json toy_config_json() {
    return json{
        {"data", {{"field", "field.csv"}, {"simulator", "simulator.csv"}, {"failures", "failures.csv"}}},
        {"inputs",
         {{"x", json::array({{{"name", "x1"}, {"lower", 0.0}, {"upper", 1.0}}})},
          {"t", json::array({{{"name", "t1"}, {"prior", {{"type", "uniform"}, {"lower", 0.0}, {"upper", 1.0}}}}})}}},
        {"seed", 1},
        {"mcmc", {{"iterations", 120000}, {"burnin", 20000}, {"thin", 3}}},
        {"classifier", {{"kernel", "matern32"}, {"mode", "c2"}, {"loocv_stride", 200}}},
        {"calibration", {{"eta_kernel", "sqexp"}, {"delta_kernel", "sqexp"}}},
        {"admissibility", {{"ptol", 0.0}, {"xtilde", "grid"}, {"xtilde_size", 50}}},
        {"bmatrix", {{"latent_draws", 200}, {"theta_draws", 500}}},
    };
}

void write_toy(const ToyData &toy, const ToySpec &spec, const fs::path &dir) {
    fs::create_directories(dir);
    write_raw_data(toy.raw, dir, {"x1"}, {"t1"});
    const ToyTruth &t = toy.truth;
    write_json(dir / "truth.json", json{{"theta", t.theta},
                                             {"seed", spec.seed},
                                             {"failing_t_below", t.band_lower},
                                             {"failing_t_above", t.band_upper},
                                             {"band", {t.success_lower, t.success_upper}},
                                             {"N", t.n},
                                             {"M", t.m},
                                             {"M0", t.m0}});
    json cfg = toy_config_json();
    cfg["seed"] = spec.seed;
    cfg["bmatrix"]["naive_bounds"] = json::array({json::array({t.success_lower, t.success_upper})});
    write_json(dir / "config.json", cfg);
}

// ---------------------------------------------------------------------------
// States and checkpoints

json calibration_state_to_json(const CalibrationState &s) {
    const auto &p = s.params;
    return json{{"theta", vector_to_json(s.theta.natural)},
                {"mu_eta", p.mu_eta},
                {"mu_delta", p.mu_delta},
                {"var_eta", p.var_eta},
                {"var_delta", p.var_delta},
                {"var_eps", p.var_eps},
                {"lambda_eta_x", vector_to_json(p.lambda_eta_x)},
                {"lambda_eta_t", vector_to_json(p.lambda_eta_t)},
                {"lambda_delta", vector_to_json(p.lambda_delta)}};
}

CalibrationState calibration_state_from_json(const json &j, const std::vector<PriorSpec> &priors) {
    CalibrationState s;
    s.theta = Theta::from_natural(vector_from_json(j.at("theta")), priors);
    auto &p = s.params;
    p.mu_eta = j.at("mu_eta").get<double>();
    p.mu_delta = j.at("mu_delta").get<double>();
    p.var_eta = j.at("var_eta").get<double>();
    p.var_delta = j.at("var_delta").get<double>();
    p.var_eps = j.at("var_eps").get<double>();
    p.lambda_eta_x = vector_from_json(j.at("lambda_eta_x"));
    p.lambda_eta_t = vector_from_json(j.at("lambda_eta_t"));
    p.lambda_delta = vector_from_json(j.at("lambda_delta"));
    return s;
}

json latent_state_to_json(const LatentState &s) {
    return json{{"zeta", vector_to_json(s.zeta)}, {"mu", s.mu}, {"lambda", vector_to_json(s.lambda)}};
}

LatentState latent_state_from_json(const json &j) {
    LatentState s;
    s.zeta = vector_from_json(j.at("zeta"));
    s.mu = j.at("mu").get<double>();
    s.lambda = vector_from_json(j.at("lambda"));
    return s;
}

namespace {

json snapshot_to_json(const ProposalSnapshot &p) {
    return json{{"initial", matrix_to_json(p.initial)},
                {"count", p.count},
                {"mean", vector_to_json(p.mean)},
                {"scatter", matrix_to_json(p.scatter)},
                {"frozen", p.frozen}};
}

ProposalSnapshot snapshot_from_json(const json &j) {
    ProposalSnapshot p;
    p.initial = matrix_from_json(j.at("initial"));
    p.count = j.at("count").get<long>();
    p.mean = vector_from_json(j.at("mean"));
    p.scatter = matrix_from_json(j.at("scatter"));
    p.frozen = j.at("frozen").get<bool>();
    return p;
}

}  // namespace

json checkpoint_to_json(const CoupledCheckpoint &c) {
    return json{{"iteration", c.iteration},
                {"calibration", calibration_state_to_json(c.calibration)},
                {"latent", latent_state_to_json(c.latent)},
                {"rng", {{"calibration", c.rng_calibration},
                         {"classifier", c.rng_classifier},
                         {"gate", c.rng_gate},
                         {"loocv", c.rng_loocv}}},
                {"proposals",
                 {{"etadelta", snapshot_to_json(c.etadelta)},
                  {"theta", snapshot_to_json(c.theta)},
                  {"lambda", snapshot_to_json(c.lambda)}}}};
}

CoupledCheckpoint checkpoint_from_json(const json &j, const std::vector<PriorSpec> &priors) {
    CoupledCheckpoint c;
    try {
        c.iteration = j.at("iteration").get<long>();
        c.calibration = calibration_state_from_json(j.at("calibration"), priors);
        c.latent = latent_state_from_json(j.at("latent"));
        const json &r = j.at("rng");
        c.rng_calibration = r.at("calibration").get<std::string>();
        c.rng_classifier = r.at("classifier").get<std::string>();
        c.rng_gate = r.at("gate").get<std::string>();
        c.rng_loocv = r.at("loocv").get<std::string>();
        const json &p = j.at("proposals");
        c.etadelta = snapshot_from_json(p.at("etadelta"));
        c.theta = snapshot_from_json(p.at("theta"));
        c.lambda = snapshot_from_json(p.at("lambda"));
    } catch (const json::exception &e) {
        throw IoError(std::string("malformed checkpoint: ") + e.what());
    }
    return c;
}

// ---------------------------------------------------------------------------
// Archives

void write_archive(const fs::path &stem, const std::vector<Chain> &chains, const ArchiveMeta &meta) {
    if (chains.empty()) throw InvalidArgument("write_archive: no chains");
    Table t;
    t.header = {"chain"};
    t.header.insert(t.header.end(), chains.front().columns().begin(), chains.front().columns().end());
    json per_chain = json::array();
    for (std::size_t c = 0; c < chains.size(); ++c) {
        const Chain &ch = chains[c];
        if (ch.columns() != chains.front().columns()) throw InvalidArgument("write_archive: column mismatch");
        for (std::size_t r = 0; r < ch.size(); ++r) {
            std::vector<double> row{static_cast<double>(c)};
            const auto src = ch.row(r);
            row.insert(row.end(), src.begin(), src.end());
            t.rows.push_back(std::move(row));
        }
        json acc = json::object();
        for (const auto &[name, a] : ch.acceptance) {
            acc[name] = {{"accepted", a.accepted}, {"attempted", a.attempted}, {"rate", a.rate()}};
        }
        json diag = json::object();
        for (const auto &[name, v] : ch.diagnostics) {
            json arr = json::array();
            for (const auto &[it, val] : v) arr.push_back({it, val});
            diag[name] = arr;
        }
        per_chain.push_back({{"index", c}, {"acceptance", acc}, {"diagnostics", diag}, {"jitter_events", ch.jitter_events}});
    }
    fs::path csv = stem;
    csv += ".csv";
    write_csv(csv, t);

    json m = meta.extra;
    m["kind"] = meta.kind;
    m["seed"] = meta.seed;
    m["config_hash"] = hex64(meta.config_hash);
    m["columns"] = chains.front().columns();
    m["rows"] = t.rows.size();
    if (m.contains("chains") && m["chains"].is_array()) {
        for (std::size_t c = 0; c < per_chain.size() && c < m["chains"].size(); ++c) per_chain[c].update(m["chains"][c]);
    }
    m["chains"] = per_chain;
    fs::path meta_path = stem;
    meta_path += ".meta.json";
    write_json(meta_path, m);
}

Archive read_archive(const fs::path &stem) {
    fs::path csv = stem;
    csv += ".csv";
    fs::path meta_path = stem;
    meta_path += ".meta.json";
    Archive a;
    a.meta = read_json(meta_path);
    const Table t = read_csv(csv);
    if (t.header.empty() || t.header.front() != "chain") throw IoError(csv.string() + ": first column must be 'chain'");
    const std::vector<std::string> cols(t.header.begin() + 1, t.header.end());
    const std::size_t n_chains = a.meta.contains("chains") ? a.meta["chains"].size() : 1;
    a.chains.assign(std::max<std::size_t>(n_chains, 1), Chain(cols));
    for (const auto &row : t.rows) {
        const auto c = static_cast<std::size_t>(row[0]);
        if (c >= a.chains.size()) a.chains.resize(c + 1, Chain(cols));
        a.chains[c].record(std::span<const double>(row).subspan(1));
    }
    if (a.meta.contains("chains")) {
        for (std::size_t c = 0; c < a.meta["chains"].size() && c < a.chains.size(); ++c) {
            const json &m = a.meta["chains"][c];
            Chain &ch = a.chains[c];
            const json acc = m.value("acceptance", json::object());
            const json diag = m.value("diagnostics", json::object());
            for (const auto &[name, v] : acc.items()) {
                ch.acceptance[name] = {v.at("accepted").get<long>(), v.at("attempted").get<long>()};
            }
            for (const auto &[name, v] : diag.items()) {
                auto &dst = ch.diagnostics[name];
                for (const auto &p : v) dst.emplace_back(p[0].get<long>(), p[1].get<double>());
            }
            ch.jitter_events = m.value("jitter_events", 0L);
        }
    }
    return a;
}

}  // namespace failcal
