// Synthetic multi-domain datasets (per-class modes that move across domains),
// plain-text dataset files, and the leave-one-domain-out split protocol with
// an 8:2 train/validation division inside every source domain.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcdg/numerics.hpp"

namespace gcdg {

struct Sample {
    Vec64 x;
    std::size_t class_id = 0;
    std::size_t domain_id = 0;
};

struct Dataset {
    std::size_t raw_dim = 0;
    std::size_t num_domains = 0;
    std::size_t num_classes = 0;
    std::vector<Sample> samples;
};

// One Gaussian mode per (domain, class) cell. centers is domain-major:
// centers[m * classes + c].
struct TaskSpec {
    std::size_t domains = 0;
    std::size_t classes = 0;
    std::size_t raw_dim = 0;
    std::vector<Vec64> centers;
    double mode_std = 0.0;
    std::size_t samples_per_cell = 0;
    std::uint64_t seed = 0;

    void validate() const {
        require(domains >= 1 && classes >= 1 && raw_dim >= 1 && samples_per_cell >= 1,
                "TaskSpec: all counts must be positive");
        require(mode_std >= 0.0, "TaskSpec: mode_std must be non-negative");
        require(centers.size() == domains * classes, "TaskSpec: need one center per (domain, class)");
        for (const auto& c : centers) {
            require(c.size() == raw_dim, "TaskSpec: center dimension mismatch");
        }
    }
};

struct SplitPlan {
    std::size_t target_domain = 0;
    std::vector<std::vector<std::size_t>> train_idx;  // per domain; empty for the target
    std::vector<std::vector<std::size_t>> val_idx;
};

inline Dataset generate(const TaskSpec& spec) {
    spec.validate();
    Dataset ds;
    ds.raw_dim = spec.raw_dim;
    ds.num_domains = spec.domains;
    ds.num_classes = spec.classes;
    ds.samples.reserve(spec.domains * spec.classes * spec.samples_per_cell);
    Rng rng(spec.seed, /*stream=*/0);
    for (std::size_t m = 0; m < spec.domains; ++m) {
        for (std::size_t c = 0; c < spec.classes; ++c) {
            const Vec64& center = spec.centers[m * spec.classes + c];
            for (std::size_t s = 0; s < spec.samples_per_cell; ++s) {
                Sample sample{Vec64(spec.raw_dim), c, m};
                for (std::size_t d = 0; d < spec.raw_dim; ++d) {
                    sample.x[d] = rng.gaussian(center[d], spec.mode_std);
                }
                ds.samples.push_back(std::move(sample));
            }
        }
    }
    return ds;
}

// Seeded 8:2 split of every source domain; the target domain is held out
// whole. val gets floor(n/5) samples.
inline SplitPlan split(const Dataset& ds, std::size_t target, std::uint64_t seed) {
    if (target >= ds.num_domains) throw std::out_of_range("split: target domain out of range");
    SplitPlan plan;
    plan.target_domain = target;
    plan.train_idx.resize(ds.num_domains);
    plan.val_idx.resize(ds.num_domains);
    Rng rng(seed, /*stream=*/1);
    for (std::size_t m = 0; m < ds.num_domains; ++m) {
        if (m == target) continue;
        std::vector<std::size_t> idx;
        for (std::size_t s = 0; s < ds.samples.size(); ++s) {
            if (ds.samples[s].domain_id == m) idx.push_back(s);
        }
        rng.shuffle(idx);
        const std::size_t n_val = idx.size() / 5;
        plan.val_idx[m].assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
        plan.train_idx[m].assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    }
    return plan;
}

inline std::vector<std::size_t> target_indices(const Dataset& ds, const SplitPlan& plan) {
    std::vector<std::size_t> idx;
    for (std::size_t s = 0; s < ds.samples.size(); ++s) {
        if (ds.samples[s].domain_id == plan.target_domain) idx.push_back(s);
    }
    return idx;
}

// File format: optional '#' comment lines, a header `domain,class,x0,...`,
// then one comma-separated row per sample with full round-trip precision.
inline void save(const Dataset& ds, const std::string& path,
                 const std::vector<std::string>& comment_lines = {}) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save: cannot open " + path + " for writing");
    for (const auto& line : comment_lines) out << "# " << line << "\n";
    out << "domain,class";
    for (std::size_t d = 0; d < ds.raw_dim; ++d) out << ",x" << d;
    out << "\n";
    out << std::setprecision(17);
    for (const auto& s : ds.samples) {
        out << s.domain_id << "," << s.class_id;
        for (double v : s.x) out << "," << v;
        out << "\n";
    }
    if (!out) throw std::runtime_error("save: write failure on " + path);
}

inline Dataset load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load: cannot open " + path);
    std::string line;
    std::size_t line_no = 0;
    // header
    std::size_t raw_dim = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("domain,class", 0) != 0) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected header starting with 'domain,class'");
        }
        std::size_t count = 0;
        for (char ch : line) count += (ch == ',');
        raw_dim = count - 1;
        if (raw_dim == 0) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": header names no feature columns");
        }
        have_header = true;
        break;
    }
    if (!have_header) throw std::runtime_error(path + ": empty dataset file (no header)");

    Dataset ds;
    ds.raw_dim = raw_dim;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != raw_dim + 2) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected " +
                                     std::to_string(raw_dim + 2) + " columns, got " +
                                     std::to_string(fields.size()));
        }
        Sample s;
        try {
            s.domain_id = std::stoul(fields[0]);
            s.class_id = std::stoul(fields[1]);
            s.x.resize(raw_dim);
            for (std::size_t d = 0; d < raw_dim; ++d) {
                std::size_t used = 0;
                s.x[d] = std::stod(fields[d + 2], &used);
                if (used != fields[d + 2].size()) throw std::invalid_argument("trailing junk");
            }
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed row");
        }
        ds.num_domains = std::max(ds.num_domains, s.domain_id + 1);
        ds.num_classes = std::max(ds.num_classes, s.class_id + 1);
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.empty()) throw std::runtime_error(path + ": dataset has a header but no rows");
    return ds;
}

// Frozen 1-D task: class 0 sits at -2 in domains 0 and 2 but at +2 in domain
// 1; class 1 sits at 0 everywhere. With domain 2 held out the pooled sources
// make class 0 bimodal, which caps any single linear threshold near 0.75
// accuracy while a two-component mixture is close to the Bayes optimum.
inline TaskSpec task_bimodal1d(std::uint64_t seed = 0) {
    TaskSpec spec;
    spec.domains = 3;
    spec.classes = 2;
    spec.raw_dim = 1;
    spec.mode_std = 0.3;
    spec.samples_per_cell = 100;
    spec.seed = seed;
    spec.centers = {{-2.0}, {0.0},   // domain 0: class 0, class 1
                    {+2.0}, {0.0},   // domain 1
                    {-2.0}, {0.0}};  // domain 2
    return spec;
}

// The canonical held-out domain for the bimodal1d comparison: the remaining
// sources then carry one class-0 mode each (-2 and +2).
inline constexpr std::size_t kBimodal1dTarget = 2;

// Frozen 2-D, 3-class, 3-domain task. Each class has two antipodal modes on a
// small circle; domains 0 and 2 use one set, domain 1 the other. Pooled
// sources interleave the six modes around the circle, so no linear sectoring
// separates the classes, while per-class mixtures resolve the modes. The
// sub-unit scale keeps the raw geometry inside the classifier's component
// initialization range.
inline TaskSpec task_trimodal2d(std::uint64_t seed = 0) {
    TaskSpec spec;
    spec.domains = 3;
    spec.classes = 3;
    spec.raw_dim = 2;
    spec.mode_std = 0.07;
    spec.samples_per_cell = 80;
    spec.seed = seed;
    const double r = 0.4;
    auto mode = [&](std::size_t c, bool flip) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / 3.0;
        const double sign = flip ? -1.0 : 1.0;
        return Vec64{sign * r * std::cos(angle), sign * r * std::sin(angle)};
    };
    spec.centers.clear();
    for (std::size_t m = 0; m < 3; ++m) {
        const bool flip = (m == 1);
        for (std::size_t c = 0; c < 3; ++c) spec.centers.push_back(mode(c, flip));
    }
    return spec;
}

inline TaskSpec named_task(const std::string& name, std::uint64_t seed = 0) {
    if (name == "bimodal1d") return task_bimodal1d(seed);
    if (name == "trimodal2d") return task_trimodal2d(seed);
    throw std::invalid_argument("named_task: unknown task '" + name + "'");
}

// Task spec files: `key = value` lines plus one `center <domain> <class> =
// v0,v1,...` line per cell.
inline TaskSpec load_task_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_task_spec: cannot open " + path);
    TaskSpec spec;
    std::vector<std::pair<std::size_t, std::pair<std::size_t, Vec64>>> centers;
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& msg) -> std::invalid_argument {
        return std::invalid_argument(path + ":" + std::to_string(line_no) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "center") {
            std::size_t m = 0, c = 0;
            std::string eq;
            ss >> m >> c >> eq;
            if (eq != "=") throw fail("expected 'center <domain> <class> = v0,v1,...'");
            std::string rest;
            std::getline(ss, rest);
            Vec64 v;
            std::stringstream vs(rest);
            std::string tok;
            while (std::getline(vs, tok, ',')) {
                try {
                    v.push_back(std::stod(tok));
                } catch (const std::exception&) {
                    throw fail("malformed center value '" + tok + "'");
                }
            }
            centers.push_back({m, {c, std::move(v)}});
            continue;
        }
        std::string eq, value;
        ss >> eq >> value;
        if (eq != "=") throw fail("expected 'key = value'");
        bool known = true;
        try {
            if (key == "domains") spec.domains = std::stoul(value);
            else if (key == "classes") spec.classes = std::stoul(value);
            else if (key == "raw_dim") spec.raw_dim = std::stoul(value);
            else if (key == "mode_std") spec.mode_std = std::stod(value);
            else if (key == "samples_per_cell") spec.samples_per_cell = std::stoul(value);
            else if (key == "seed") spec.seed = std::stoull(value);
            else known = false;
        } catch (const std::exception&) {
            throw fail("malformed value for '" + key + "'");
        }
        if (!known) throw fail("unknown task spec key '" + key + "'");
    }
    require(spec.domains >= 1 && spec.classes >= 1, "load_task_spec: missing domains/classes");
    spec.centers.assign(spec.domains * spec.classes, Vec64());
    for (auto& [m, rest] : centers) {
        auto& [c, v] = rest;
        if (m >= spec.domains || c >= spec.classes) {
            throw std::invalid_argument(path + ": center (" + std::to_string(m) + "," +
                                        std::to_string(c) + ") out of range");
        }
        spec.centers[m * spec.classes + c] = std::move(v);
    }
    spec.validate();
    return spec;
}

}  // namespace gcdg
