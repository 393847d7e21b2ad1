#include "ckdyn/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "ckdyn/errors.hpp"
#include "ckdyn/training.hpp"

namespace ckdyn::experiments {

namespace {

// Runs task(i) for i in [0, n) on up to `jobs` threads. Each task writes only
// its own output slot, so results do not depend on scheduling.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& task) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        task(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

double row_norm(std::span<const double> r) {
    double s = 0.0;
    for (double v : r) s += v * v;
    return std::sqrt(s);
}

std::vector<double> ranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
        i = j + 1;
    }
    return r;
}

double pearson(std::span<const double> a, std::span<const double> b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) throw ContractError("spearman: a constant sequence has no rank correlation");
    return sab / std::sqrt(saa * sbb);
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    return os;
}

void check_written(std::ofstream& os, const std::filesystem::path& path) {
    os.flush();
    if (!os) throw IoError("write failed for " + path.string());
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string num(double v) { return fmt("%.10g", v); }

}  // namespace

PerturbationReport measure_perturbation(const Trajectory& trajectory, double dl) {
    if (trajectory.forcing.empty()) throw ContractError("measure_perturbation: trajectory has no recorded forcing");
    if (trajectory.positions.size() < trajectory.forcing.size())
        throw ContractError("measure_perturbation: fewer positions than forcing entries");
    PerturbationReport report;
    double total = 0.0;
    for (std::size_t l = 0; l < trajectory.forcing.size(); ++l) {
        const Tensor& x = trajectory.positions[l];
        const Tensor& f = trajectory.forcing[l];
        if (x.shape() != f.shape())
            throw DimensionError("measure_perturbation: layer " + std::to_string(l) + " position " +
                                 shape_string(x.shape()) + " vs forcing " + shape_string(f.shape()));
        const std::size_t rows = x.rank() == 2 ? x.rows() : 1;
        const std::size_t width = x.size() / rows;
        double sum = 0.0;
        std::size_t used = 0;
        for (std::size_t b = 0; b < rows; ++b) {
            const double nx = row_norm(x.data().subspan(b * width, width));
            if (nx == 0.0) {
                ++report.excluded;
                continue;
            }
            sum += std::abs(dl) * row_norm(f.data().subspan(b * width, width)) / nx;
            ++used;
        }
        const double ratio = used ? sum / static_cast<double>(used) : 0.0;
        report.layers.push_back({static_cast<int>(l), ratio});
        total += ratio;
    }
    report.mean = total / static_cast<double>(report.layers.size());
    return report;
}

PerturbationReport measure_perturbation(const Network& net, const Tensor& batch) {
    const auto& c = net.config();
    if (!(c.family == Family::c1 || (c.family == Family::ck && c.order == 1)))
        throw ContractError("measure_perturbation: needs a first-order residual network, got " + to_string(c.family) +
                            " of order " + std::to_string(c.order));
    if (c.depth < 1) throw ContractError("measure_perturbation: network has no blocks");
    const auto out = net.forward(batch, Mode::direct, true);
    return measure_perturbation(out.trajectory, c.dl);
}

RegressionFit fit_computational_distance(std::span<const std::pair<int, double>> points) {
    std::vector<int> distinct;
    for (const auto& [depth, rho] : points) {
        if (!(rho > 0.0) || !std::isfinite(rho))
            throw ContractError("fit_computational_distance: mean ratio at depth " + std::to_string(depth) +
                                " must be positive, got " + num(rho));
        distinct.push_back(depth);
    }
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 3)
        throw ContractError("fit_computational_distance: need at least 3 distinct depths, got " +
                            std::to_string(distinct.size()));

    const double n = static_cast<double>(points.size());
    double mx = 0.0, my = 0.0;
    for (const auto& [depth, rho] : points) {
        mx += depth;
        my += 1.0 / rho;
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& [depth, rho] : points) {
        const double dx = depth - mx, dy = 1.0 / rho - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    RegressionFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    if (!(fit.slope > 0.0))
        throw ContractError("fit_computational_distance: slope " + num(fit.slope) +
                            " is not positive, so no finite distance exists");
    double ss_res = 0.0;
    for (const auto& [depth, rho] : points) {
        const double e = 1.0 / rho - (fit.intercept + fit.slope * depth);
        ss_res += e * e;
    }
    fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    fit.d_estimate = 1.0 / fit.slope;
    return fit;
}

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("spearman: sequences differ in length");
    if (a.size() < 2) throw ContractError("spearman: need at least 2 points");
    const auto ra = ranks(a), rb = ranks(b);
    return pearson(ra, rb);
}

double ToyResult::worst_accuracy() const {
    if (runs.empty()) throw ContractError("toy result has no runs");
    double w = runs.front().accuracy;
    for (const auto& r : runs) w = std::min(w, r.accuracy);
    return w;
}

namespace {

CkNetworkConfig toy_network(const ToyConfig& config, std::uint64_t seed) {
    CkNetworkConfig c;
    c.family = Family::ck;
    c.order = config.order;
    c.depth = config.depth;
    c.width = 1;
    c.input_dim = 1;
    c.num_classes = 2;
    c.dl = 1.0 / static_cast<double>(config.depth);
    c.activation = config.activation;
    c.seed = seed;
    return c;
}

TrajectoryDump dump_phase_space(const Network& net, const Dataset& data) {
    const auto out = net.forward(data.inputs, Mode::state_space, true);
    TrajectoryDump dump;
    dump.labels = data.labels;
    for (const auto& q : out.trajectory.states) {
        std::vector<std::array<double, 2>> layer(data.size());
        for (std::size_t b = 0; b < data.size(); ++b) {
            layer[b][0] = q[0].data()[b];
            layer[b][1] = q.size() > 1 ? q[1].data()[b] : 0.0;
        }
        dump.points.push_back(std::move(layer));
    }
    return dump;
}

}  // namespace

ToyResult run_toy_experiment(const ToyConfig& config, int jobs) {
    if (config.order < 1) throw ContractError("run_toy_experiment: order must be >= 1");
    if (config.depth < 1) throw ContractError("run_toy_experiment: depth must be >= 1");
    if (config.seeds.empty()) throw ContractError("run_toy_experiment: no seeds");

    ToyResult result;
    result.order = config.order;
    result.runs.resize(config.seeds.size());
    std::vector<TrajectoryDump> dumps(config.seeds.size());
    parallel_for(config.seeds.size(), jobs, [&](std::size_t i) {
        const std::uint64_t seed = config.seeds[i];
        const Dataset data = generate_toy_1d(config.samples_per_segment, seed);
        Network net(toy_network(config, seed));
        TrainConfig tc;
        tc.epochs = config.epochs;
        tc.batch_size = data.size();
        tc.learning_rate = config.learning_rate;
        tc.seed = seed;
        train(net, data, tc);
        result.runs[i] = {seed, evaluate(net, data).accuracy};
        dumps[i] = dump_phase_space(net, data);
    });
    for (std::size_t i = 1; i < result.runs.size(); ++i)
        if (result.runs[i].accuracy > result.runs[result.best].accuracy) result.best = i;
    result.trajectory = std::move(dumps[result.best]);
    return result;
}

SweepResult run_depth_sweep(const SweepConfig& config, const Dataset& train_set, int jobs) {
    {
        std::vector<int> d = config.depths;
        std::sort(d.begin(), d.end());
        if (std::unique(d.begin(), d.end()) - d.begin() < 3)
            throw ContractError("run_depth_sweep: need at least 3 distinct depths");
    }
    if (config.repetitions < 1) throw ContractError("run_depth_sweep: repetitions must be >= 1");
    if (train_set.size() == 0) throw ContractError("run_depth_sweep: empty dataset");
    const Tensor probe = train_set.head(std::min(config.probe_size, train_set.size())).inputs;

    const std::size_t reps = static_cast<std::size_t>(config.repetitions);
    std::vector<double> rho(config.depths.size() * reps);
    parallel_for(rho.size(), jobs, [&](std::size_t i) {
        const int depth = config.depths[i / reps];
        const std::uint64_t seed = config.seed + i % reps;
        CkNetworkConfig c;
        c.family = Family::c1;
        c.depth = depth;
        c.width = config.width;
        c.input_dim = train_set.input_dim();
        c.num_classes = train_set.num_classes;
        c.dl = config.dl;
        c.seed = seed;
        Network net(c);
        TrainConfig tc;
        tc.epochs = config.epochs;
        tc.batch_size = config.batch_size;
        tc.learning_rate = config.learning_rate;
        tc.seed = seed;
        train(net, train_set, tc);
        rho[i] = measure_perturbation(net, probe).mean;
    });

    SweepResult result;
    std::vector<std::pair<int, double>> pairs;
    std::vector<double> xs, ys;
    for (std::size_t p = 0; p < config.depths.size(); ++p) {
        double m = 0.0;
        for (std::size_t r = 0; r < reps; ++r) m += rho[p * reps + r];
        m /= static_cast<double>(reps);
        result.points.push_back({config.depths[p], m});
        pairs.emplace_back(config.depths[p], m);
        xs.push_back(config.depths[p]);
        ys.push_back(m);
    }
    result.spearman = spearman(xs, ys);
    try {
        result.fit = fit_computational_distance(pairs);
    } catch (const ContractError&) {
        // Non-decreasing ρ̄ has no finite distance; the points are still worth reporting.
        const double nan = std::numeric_limits<double>::quiet_NaN();
        result.fit = {nan, nan, nan, nan};
    }
    return result;
}

std::vector<CompareRow> compare_orders(const CompareConfig& config, const Dataset& train_set, const Dataset& test,
                                       int jobs) {
    struct Arch {
        Family family;
        int order;
    };
    std::vector<Arch> archs;
    for (int k : config.orders) archs.push_back({Family::ck, k});
    for (int k : config.dense_orders) archs.push_back({Family::dense, k});
    if (archs.empty()) throw ContractError("compare_orders: nothing to compare");

    std::vector<CompareRow> rows(archs.size());
    parallel_for(archs.size(), jobs, [&](std::size_t i) {
        CkNetworkConfig c;
        c.family = archs[i].family;
        c.order = archs[i].order;
        c.depth = config.depth;
        c.width = config.width;
        c.input_dim = train_set.input_dim();
        c.num_classes = train_set.num_classes;
        c.dl = config.dl;
        c.seed = config.seed;
        Network net(c);
        TrainConfig tc;
        tc.epochs = config.epochs;
        tc.batch_size = config.batch_size;
        tc.learning_rate = config.learning_rate;
        tc.seed = config.seed;
        const auto log = train(net, train_set, tc);
        rows[i].arch = to_string(c.family);
        rows[i].order = c.order;
        rows[i].test_error = 1.0 - evaluate(net, test).accuracy;
        rows[i].final_train_loss = log.empty() ? 0.0 : log.back().train_loss;
    });
    return rows;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    auto os = open_out(path);
    os << text;
    check_written(os, path);
}

void write_toy_csv(const std::filesystem::path& path, std::span<const ToyResult> results, std::uint64_t seed) {
    if (results.empty()) throw ContractError("write_toy_csv: no results");
    auto os = open_out(path);
    os << "# seed=" << seed << "\nseed,k,accuracy\n";
    for (const auto& r : results)
        for (const auto& run : r.runs) os << run.seed << ',' << r.order << ',' << num(run.accuracy) << '\n';
    check_written(os, path);
}

void write_trajectory_csv(const std::filesystem::path& path, const TrajectoryDump& dump, std::uint64_t seed) {
    if (dump.points.empty()) throw ContractError("write_trajectory_csv: empty trajectory");
    auto os = open_out(path);
    os << "# seed=" << seed << "\nlayer,sample_id,q1,q2,label\n";
    for (std::size_t l = 0; l < dump.points.size(); ++l)
        for (std::size_t b = 0; b < dump.points[l].size(); ++b)
            os << l << ',' << b << ',' << num(dump.points[l][b][0]) << ',' << num(dump.points[l][b][1]) << ','
               << dump.labels.at(b) << '\n';
    check_written(os, path);
}

void write_depth_sweep_csv(const std::filesystem::path& path, const SweepResult& result, std::uint64_t seed) {
    if (result.points.empty()) throw ContractError("write_depth_sweep_csv: no points");
    auto os = open_out(path);
    os << "# seed=" << seed << " d_estimate=" << num(result.fit.d_estimate) << " r2=" << num(result.fit.r_squared)
       << " spearman=" << num(result.spearman) << "\nL,mean_rho,inv_rho\n";
    for (const auto& p : result.points) os << p.depth << ',' << num(p.mean_rho) << ',' << num(1.0 / p.mean_rho) << '\n';
    check_written(os, path);
}

void write_compare_csv(const std::filesystem::path& path, std::span<const CompareRow> rows, std::uint64_t seed) {
    if (rows.empty()) throw ContractError("write_compare_csv: no rows");
    auto os = open_out(path);
    os << "# seed=" << seed << "\narch,k,test_error\n";
    for (const auto& r : rows) os << r.arch << ',' << r.order << ',' << num(r.test_error) << '\n';
    check_written(os, path);
}

namespace {

constexpr double kWidth = 640, kHeight = 480, kMargin = 60;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

struct Frame {
    double x0, x1, y0, y1;

    double px(double x) const { return kMargin + (x - x0) / (x1 - x0) * (kWidth - 2 * kMargin); }
    double py(double y) const { return kHeight - kMargin - (y - y0) / (y1 - y0) * (kHeight - 2 * kMargin); }
};

Frame frame_for(std::span<const Series> series) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    std::size_t count = 0;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            if (!std::isfinite(x) || !std::isfinite(y))
                throw ContractError("plot: non-finite point in series '" + s.label + "'");
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
            ++count;
        }
    if (count == 0) throw ContractError("plot: no points");
    if (x1 == x0) x0 -= 0.5, x1 += 0.5;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    return {x0, x1, y0, y1};
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string coord(double v) { return fmt("%.2f", v); }

void open_svg(std::ostringstream& os, const PlotSpec& spec, const Frame& f) {
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<!-- seed=" << spec.seed << " -->\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << kWidth / 2 << "\" y=\"30\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
       << escape(spec.title) << "</text>\n"
       << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kWidth - 2 * kMargin << "\" height=\""
       << kHeight - 2 * kMargin << "\" fill=\"none\" stroke=\"black\"/>\n"
       << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 15
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << escape(spec.x_label)
       << "</text>\n"
       << "<text x=\"15\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\""
       << " transform=\"rotate(-90 15 " << kHeight / 2 << ")\">" << escape(spec.y_label) << "</text>\n";
    const auto tick = [&](double x, double y, const char* anchor, double v) {
        os << "<text x=\"" << coord(x) << "\" y=\"" << coord(y) << "\" text-anchor=\"" << anchor
           << "\" font-family=\"sans-serif\" font-size=\"10\">" << fmt("%.3g", v) << "</text>\n";
    };
    tick(kMargin, kHeight - kMargin + 14, "start", f.x0);
    tick(kWidth - kMargin, kHeight - kMargin + 14, "end", f.x1);
    tick(kMargin - 4, kHeight - kMargin, "end", f.y0);
    tick(kMargin - 4, kMargin + 10, "end", f.y1);
}

void legend(std::ostringstream& os, std::span<const Series> series) {
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (series[i].label.empty()) continue;
        const double y = kMargin + 16 + 16 * static_cast<double>(i);
        os << "<text x=\"" << kWidth - kMargin - 8 << "\" y=\"" << y
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << kPalette[i % 7] << "\">"
           << escape(series[i].label) << "</text>\n";
    }
}

}  // namespace

std::string svg_line_plot(std::span<const Series> series, const PlotSpec& spec) {
    const Frame f = frame_for(series);
    std::ostringstream os;
    open_svg(os, spec, f);
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (series[i].points.empty()) continue;
        os << "<polyline fill=\"none\" stroke=\"" << kPalette[i % 7] << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t p = 0; p < series[i].points.size(); ++p) {
            const auto& [x, y] = series[i].points[p];
            os << (p ? " " : "") << coord(f.px(x)) << ',' << coord(f.py(y));
        }
        os << "\"/>\n";
    }
    legend(os, series);
    os << "</svg>\n";
    return os.str();
}

std::string svg_scatter_plot(std::span<const Series> series, const PlotSpec& spec) {
    const Frame f = frame_for(series);
    std::ostringstream os;
    open_svg(os, spec, f);
    for (std::size_t i = 0; i < series.size(); ++i) {
        os << "<g fill=\"" << kPalette[i % 7] << "\">\n";
        for (const auto& [x, y] : series[i].points)
            os << "<circle cx=\"" << coord(f.px(x)) << "\" cy=\"" << coord(f.py(y)) << "\" r=\"3\"/>\n";
        os << "</g>\n";
    }
    legend(os, series);
    os << "</svg>\n";
    return os.str();
}

std::string svg_trajectory_plot(const TrajectoryDump& dump, const PlotSpec& spec) {
    if (dump.points.empty() || dump.points.front().empty())
        throw ContractError("svg_trajectory_plot: empty trajectory");
    const std::size_t samples = dump.points.front().size();
    std::vector<Series> paths(samples);
    for (std::size_t b = 0; b < samples; ++b)
        for (const auto& layer : dump.points) paths[b].points.emplace_back(layer.at(b)[0], layer.at(b)[1]);

    const Frame f = frame_for(paths);
    std::ostringstream os;
    open_svg(os, spec, f);
    for (std::size_t b = 0; b < samples; ++b) {
        const char* colour = kPalette[dump.labels.at(b) % 7];
        os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-opacity=\"0.6\" points=\"";
        for (std::size_t p = 0; p < paths[b].points.size(); ++p) {
            const auto& [x, y] = paths[b].points[p];
            os << (p ? " " : "") << coord(f.px(x)) << ',' << coord(f.py(y));
        }
        os << "\"/>\n";
        const auto& [ex, ey] = paths[b].points.back();
        os << "<circle cx=\"" << coord(f.px(ex)) << "\" cy=\"" << coord(f.py(ey)) << "\" r=\"3\" fill=\"" << colour
           << "\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace ckdyn::experiments
