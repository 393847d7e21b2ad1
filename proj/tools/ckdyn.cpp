// ckdyn: verification suite and experiments for finite-difference networks.
//
// Exit codes: 0 success, 1 check or experiment failure, 2 usage error,
// 3 I/O error.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ckdyn/architectures.hpp"
#include "ckdyn/data.hpp"
#include "ckdyn/errors.hpp"
#include "ckdyn/experiments.hpp"
#include "ckdyn/verify.hpp"

namespace fs = std::filesystem;
using namespace ckdyn;
namespace ex = ckdyn::experiments;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

fs::path prepare_out(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory " + out + ": " + ec.message());
    return fs::path(out);
}

std::string default_data_dir() {
    if (const char* env = std::getenv("CK_DATA_DIR"); env && *env) return env;
    return "data/mnist";
}

std::pair<Dataset, Dataset> load_mnist_split(const std::string& dir, std::uint64_t seed) {
    const auto files = locate_mnist(dir);
    const Dataset all = load_mnist_idx(files.train_images, files.train_labels);
    std::printf("loaded %zu MNIST samples from %s\n", all.size(), dir.c_str());
    return split(all, 0.8, seed);
}

void print_fit(const ex::SweepResult& r) {
    std::printf("%4s  %10s  %10s\n", "L", "mean_rho", "1/rho");
    for (const auto& p : r.points) std::printf("%4d  %10.5f  %10.4f\n", p.depth, p.mean_rho, 1.0 / p.mean_rho);
    std::printf("fit: 1/rho = %.5f + %.5f L   d = %.4f   r2 = %.4f   spearman(L, rho) = %.4f\n", r.fit.intercept,
                r.fit.slope, r.fit.d_estimate, r.fit.r_squared, r.spearman);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Finite-difference network dynamics: equivalence checks and experiments"};
    app.require_subcommand(1);

    std::vector<int> orders;
    std::vector<int> depths;
    std::vector<std::size_t> widths;
    std::vector<int> dense_orders;
    double dl = 0.0;
    std::uint64_t seed = 0;
    int epochs = 0;
    int seeds = 0;
    int jobs = 1;
    double tolerance = 0.0;
    double lr = 0.0;
    std::string data_dir = default_data_dir();
    std::string out = "out";
    bool flip = false;

    const auto add_jobs = [&](CLI::App* sub) {
        sub->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    };
    const auto add_out = [&](CLI::App* sub) {
        sub->add_option("--out", out, "Output directory for artifacts")->capture_default_str();
    };
    const auto add_data = [&](CLI::App* sub) {
        sub->add_option("--data-dir", data_dir, "Directory with MNIST IDX files (env CK_DATA_DIR)")
            ->capture_default_str();
    };

    auto* verify = app.add_subcommand("verify", "Run the equivalence and identity checks");
    verify->add_option("-k,--order,--k", orders, "Orders to check")->default_str("1 2 3 4");
    verify->add_option("-d,--width,--d", widths, "Widths to check")->default_str("1 2 8");
    verify->add_option("-L,--depth", depths, "Depths to check")->default_str("3 10");
    verify->add_option("--seeds", seeds, "Seeds per grid point")->default_str("50");
    verify->add_option("--seed", seed, "First seed")->capture_default_str();
    verify->add_option("--tolerance", tolerance, "Max abs deviation for trajectory equivalence")->default_str("1e-9");
    verify->add_flag("--inject-sign-flip", flip, "Flip one sign in the dense forcing matrix (mutation check)");

    auto* toy = app.add_subcommand("train-toy", "Train width-1 networks on the 1-D separability set");
    toy->add_option("-k,--order,--k", orders, "Orders to train")->default_str("1 2");
    toy->add_option("-L,--depth", depths, "Depth")->default_str("16")->expected(1);
    toy->add_option("--epochs", epochs, "Epochs per run")->default_str("2000");
    toy->add_option("--seed", seed, "First seed; five consecutive seeds are run")->capture_default_str();
    add_out(toy);
    add_jobs(toy);

    auto* sweep = app.add_subcommand("depth-sweep", "Perturbation size versus depth for residual networks");
    sweep->add_option("-L,--depth", depths, "Depths (at least 3)")->default_str("2 4 ... 20");
    sweep->add_option("-d,--width,--d", widths, "Width")->default_str("64")->expected(1);
    sweep->add_option("--dl", dl, "Mesh size")->default_str("1");
    sweep->add_option("--epochs", epochs, "Epochs per network")->default_str("30");
    sweep->add_option("--lr", lr, "Adam learning rate")->default_str("0.003");
    sweep->add_option("--seed", seed, "Seed")->capture_default_str();
    add_data(sweep);
    add_out(sweep);
    add_jobs(sweep);

    auto* compare = app.add_subcommand("compare", "Train every order under identical settings");
    compare->add_option("-k,--order,--k", orders, "Orders of the direct family")->default_str("1 2 3 4");
    compare->add_option("--dense", dense_orders, "Orders of the dense family")->default_str("2 3 4");
    compare->add_option("-L,--depth", depths, "Depth")->default_str("4")->expected(1);
    compare->add_option("-d,--width,--d", widths, "Width")->default_str("64")->expected(1);
    compare->add_option("--dl", dl, "Mesh size")->default_str("0.5");
    compare->add_option("--epochs", epochs, "Epochs")->default_str("5");
    compare->add_option("--lr", lr, "Adam learning rate")->default_str("0.001");
    compare->add_option("--seed", seed, "Seed")->capture_default_str();
    add_data(compare);
    add_out(compare);
    add_jobs(compare);

    auto* params = app.add_subcommand("param-count", "Weights per layer versus the explicit first-order network");
    params->add_option("-k,--order,--k", orders, "Order")->required()->expected(1);
    params->add_option("-d,--width,--d", widths, "Width")->required()->expected(1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*verify) {
            verify::VerifyConfig c;
            if (!orders.empty()) c.orders = orders;
            if (!widths.empty()) c.widths = widths;
            if (!depths.empty()) c.depths = depths;
            if (verify->count("--seeds")) c.seeds = seeds;
            if (verify->count("--tolerance")) c.tolerance = tolerance;
            c.first_seed = seed;
            c.flip_dense_sign = flip;
            for (int k : c.orders)
                if (k < 1) throw UsageError("--order values must be >= 1");
            for (int L : c.depths)
                if (L < 1) throw UsageError("--depth values must be >= 1");
            for (auto d : c.widths)
                if (d < 1) throw UsageError("--width values must be >= 1");
            if (c.seeds < 1) throw UsageError("--seeds must be >= 1");
            if (!(c.tolerance >= 0.0)) throw UsageError("--tolerance must be >= 0");
            const auto report = verify::run_verification(c);
            std::printf("seed=%llu tolerance=%g\n", static_cast<unsigned long long>(c.first_seed), c.tolerance);
            verify::print_report(std::cout, report);
            return report.passed() ? kExitOk : kExitFailed;
        }

        if (*toy) {
            if (orders.empty()) orders = {1, 2};
            const fs::path dir = prepare_out(out);
            std::vector<ex::ToyResult> results;
            for (int k : orders) {
                if (k < 1) throw UsageError("--order values must be >= 1");
                ex::ToyConfig c;
                c.order = k;
                if (!depths.empty()) c.depth = depths.front();
                if (toy->count("--epochs")) c.epochs = epochs;
                for (auto& s : c.seeds) s += seed;
                if (c.depth < 1 || c.epochs < 0) throw UsageError("depth must be >= 1 and epochs >= 0");
                results.push_back(ex::run_toy_experiment(c, jobs));
                const auto& r = results.back();
                std::printf("k=%d accuracy per seed:", k);
                for (const auto& run : r.runs) std::printf(" %.3f", run.accuracy);
                std::printf("   best %.3f  worst %.3f\n", r.best_accuracy(), r.worst_accuracy());
                const std::string name = "phase_k" + std::to_string(k) + ".svg";
                ex::write_text(dir / name, ex::svg_trajectory_plot(r.trajectory, {"Phase space, order " + std::to_string(k),
                                                                                  "position q1", "velocity q2", seed}));
            }
            ex::write_toy_csv(dir / "toy.csv", results, seed);
            ex::write_trajectory_csv(dir / "trajectory.csv", results.back().trajectory, seed);
            std::printf("raw-input best threshold accuracy: %.4f\n", [&] {
                const Dataset d = generate_toy_1d(ex::ToyConfig{}.samples_per_segment, seed);
                return best_threshold_accuracy(d.inputs.data(), d.labels);
            }());
            std::printf("wrote %s\n", dir.string().c_str());
            return kExitOk;
        }

        if (*sweep) {
            ex::SweepConfig c;
            if (!depths.empty()) c.depths = depths;
            if (!widths.empty()) c.width = widths.front();
            if (sweep->count("--dl")) c.dl = dl;
            if (sweep->count("--epochs")) c.epochs = epochs;
            if (sweep->count("--lr")) c.learning_rate = lr;
            c.seed = seed;
            {
                std::vector<int> d = c.depths;
                std::sort(d.begin(), d.end());
                if (std::unique(d.begin(), d.end()) - d.begin() < 3)
                    throw UsageError("depth-sweep needs at least 3 distinct --depth values");
                for (int L : d)
                    if (L < 1) throw UsageError("--depth values must be >= 1");
            }
            const auto [train_set, held_out] = load_mnist_split(data_dir, seed);
            const fs::path dir = prepare_out(out);
            const auto r = ex::run_depth_sweep(c, train_set, jobs);
            print_fit(r);
            ex::write_depth_sweep_csv(dir / "depth_sweep.csv", r, seed);
            ex::Series measured{"1/rho", {}}, fitted{"fit", {}};
            for (const auto& p : r.points) {
                measured.points.emplace_back(p.depth, 1.0 / p.mean_rho);
                if (std::isfinite(r.fit.slope)) fitted.points.emplace_back(p.depth, r.fit.intercept + r.fit.slope * p.depth);
            }
            std::vector<ex::Series> series{measured};
            if (!fitted.points.empty()) series.push_back(fitted);
            ex::write_text(dir / "depth_sweep.svg",
                           ex::svg_line_plot(series, {"Inverse perturbation size vs depth", "L", "1/rho", seed}));
            std::printf("wrote %s\n", dir.string().c_str());
            return kExitOk;
        }

        if (*compare) {
            ex::CompareConfig c;
            if (!orders.empty()) c.orders = orders;
            if (compare->count("--dense")) c.dense_orders = dense_orders;
            if (!depths.empty()) c.depth = depths.front();
            if (!widths.empty()) c.width = widths.front();
            if (compare->count("--dl")) c.dl = dl;
            if (compare->count("--epochs")) c.epochs = epochs;
            if (compare->count("--lr")) c.learning_rate = lr;
            c.seed = seed;
            const auto [train_set, test_set] = load_mnist_split(data_dir, seed);
            const fs::path dir = prepare_out(out);
            const auto rows = ex::compare_orders(c, train_set, test_set, jobs);
            std::printf("%-6s %2s  %10s\n", "arch", "k", "test_error");
            for (const auto& r : rows) std::printf("%-6s %2d  %10.4f\n", r.arch.c_str(), r.order, r.test_error);
            ex::write_compare_csv(dir / "compare.csv", rows, seed);
            std::printf("wrote %s\n", dir.string().c_str());
            return kExitOk;
        }

        if (*params) {
            const int k = orders.front();
            const std::size_t d = widths.front();
            if (k < 1 || d < 1) throw UsageError("--order and --width must be >= 1");
            const auto mine = ck_parameter_count(k, d, 1);
            const auto full = first_order_equivalent_parameter_count(k, d, 1);
            const Ratio r = weight_ratio(k, d, 1);
            std::printf("%llu vs %llu (ratio %g)\n", static_cast<unsigned long long>(mine.weights),
                        static_cast<unsigned long long>(full.weights), r.value());
            return kExitOk;
        }
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n%s", e.what(), app.help().c_str());
        return kExitUsage;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFailed;
    }
    return kExitUsage;
}
