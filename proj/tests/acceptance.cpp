// Acceptance suite: one PASS/FAIL line per criterion.
//
// Exit status is 0 when every criterion passes or fails only where listed via
// --known-failure; an unlisted failure, or a listed criterion that now passes,
// gives exit status 1.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "condgp/cli.hpp"

using namespace condgp;

namespace {

struct Verdict {
    bool passed = false;
    std::string detail;
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

double mc_window(const McSummary& s, std::size_t first, std::size_t last) {
    const auto fe = s.metric("function_error");
    double total = 0.0;
    for (std::size_t k = first; k <= last; ++k) total += s.mean[k][fe];
    return total / static_cast<double>(last - first + 1);
}

Verdict timed(const CheckResult& r, double budget_s) {
    const bool fast = r.seconds < budget_s;
    return {r.passed && fast, r.detail + ", " + fmt(r.seconds, 3) + " s < " + fmt(budget_s) + " s"};
}

Verdict criterion_1() {
    const auto t0 = std::chrono::steady_clock::now();
    auto r = checks::orthonormality();
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return timed(r, 5.0);
}

Verdict criterion_2() {
    const auto t0 = std::chrono::steady_clock::now();
    auto r = checks::distance_equality();
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return timed(r, 5.0);
}

Verdict criterion_3() {
    const auto r = checks::full_rank_recovery();
    return {r.passed, r.detail};
}

// Pilot oracle: conditioned/original mean error ratio at d = 6 was 3.53.
constexpr double kSweepFactor = 3.0;

double max_even_ratio(const OfflineResult& off) {
    double worst = 0.0;
    for (const auto& m : off.models) {
        double even = 0.0;
        for (Eigen::Index i = 1; i < m.w.size(); i += 2) even = std::max(even, std::abs(m.w(i)));
        worst = std::max(worst, even / m.w.cwiseAbs().maxCoeff());
    }
    return worst;
}

Verdict criterion_4() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = sinc_preset();
    const auto& off = checks::sinc_offline();
    const auto rows = dof_error_sweep(cfg, off);
    const auto& d6 = rows.at(5);
    const double factor = d6.mean_error_original / d6.mean_error_conditioned;

    // symmetry of the target itself, so the realizations are fitted without sensor noise
    auto clean = cfg;
    clean.offline.sigma_xi = 0.0;
    const double even_clean = max_even_ratio(condition_datasets(clean, offline_datasets(clean)));
    const double even_noisy = max_even_ratio(off);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const bool a = factor >= kSweepFactor, b = even_clean <= 1e-3, fast = seconds < 60.0;
    return {a && b && fast,
            std::string("(a) ") + (a ? "pass" : "fail") + ": original/conditioned error at d=6 = " +
                fmt(d6.mean_error_original) + "/" + fmt(d6.mean_error_conditioned) + " = " + fmt(factor) +
                " >= " + fmt(kSweepFactor) + "; (b) " + (b ? "pass" : "fail") +
                ": max even/max |w| = " + fmt(even_clean, 3) + " <= 1e-3 (with sensor noise " +
                fmt(even_noisy, 3) + "); " + fmt(seconds, 3) + " s < 60 s"};
}

// Pilot oracle over 50 runs: steps 900-999 / steps 0-49 = 0.026, step-1000 spike = 88x the pre-switch error.
constexpr double kConvergenceRatio = 0.05;
constexpr double kSpikeFactor = 20.0;
constexpr double kReconvergeFactor = 2.0;

Verdict criterion_5() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = battery_preset();
    const auto off = offline_pipeline(cfg);
    const auto s = monte_carlo_study(cfg, off, cfg.runs, cfg.seed);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const double start = mc_window(s, 0, 49), pre = mc_window(s, 900, 999);
    const double spike = mc_window(s, 1000, 1000), post = mc_window(s, 1900, 1999);
    const bool a = pre <= kConvergenceRatio * start;
    const bool spiked = spike >= kSpikeFactor * pre;
    const bool reconverged = post <= kReconvergeFactor * pre;
    const bool c = s.failure_rate() <= 0.10;
    const bool fast = seconds < 600.0;
    auto tag = [](bool ok) { return ok ? std::string("pass") : std::string("fail"); };
    return {a && spiked && reconverged && c && fast,
            "(a) " + tag(a) + ": steps 900-999 / 0-49 = " + fmt(pre) + "/" + fmt(start) + " = " + fmt(pre / start) +
                " <= " + fmt(kConvergenceRatio) + "; (b) spike " + tag(spiked) + ": step 1000 = " + fmt(spike) +
                " = " + fmt(spike / pre) + "x >= " + fmt(kSpikeFactor) + "x; (b) re-convergence " + tag(reconverged) +
                ": steps 1900-1999 = " + fmt(post) + ", ceiling " + fmt(kReconvergeFactor) + " x " + fmt(pre) + " = " +
                fmt(kReconvergeFactor * pre) +
                "; (c) " + tag(c) + ": failure rate " + fmt(s.failure_rate()) + " <= 0.1 (" +
                std::to_string(s.runs) + " runs, c = " + fmt(cfg.filter.exploration) + "); " + fmt(seconds, 3) +
                " s < 600 s"};
}

Verdict criterion_6() {
    const auto r = checks::kalman_sanity();
    return {r.passed, r.detail + " (Np = 500, 20 seeds, 500 steps)"};
}

Verdict criterion_7() {
    auto cfg = battery_preset();
    const auto rec = run_online_scenario(cfg, checks::battery_offline(), cfg.seed);
    if (rec.failed) return {false, "run failed: " + rec.failure_message};
    std::vector<double> us;
    for (std::size_t k = 1; k < rec.rows.size(); ++k) us.push_back(rec.rows[k].wall_time_us);
    std::sort(us.begin(), us.end());
    double mean = 0.0;
    for (double v : us) mean += v / static_cast<double>(us.size());
    const double worst_ms = us.back() / 1000.0;
    return {worst_ms <= 50.0, "Np = " + std::to_string(cfg.filter.particles) + ": mean " + fmt(mean / 1000.0) +
                                  " ms, max " + fmt(worst_ms) + " ms per step <= 50 ms over " +
                                  std::to_string(us.size()) + " steps"};
}

Verdict criterion_8() {
    const char* argv[] = {"condgp", "validate"};
    std::ostringstream out, err;
    const int code = parse_and_dispatch(2, argv, out, err);
    std::istringstream lines(out.str());
    std::size_t total = 0, failed = 0;
    for (std::string line; std::getline(lines, line);) {
        ++total;
        if (line.rfind("PASS", 0) != 0) ++failed;
        std::cout << "    " << line << '\n';
    }
    return {code == kExitOk && failed == 0 && total > 0,
            "validate exit " + std::to_string(code) + ", " + std::to_string(total - failed) + "/" +
                std::to_string(total) + " checks passed"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"condgp acceptance suite"};
    std::vector<int> known;
    std::vector<int> only;
    app.add_option("--known-failure", known, "criterion expected to fail");
    app.add_option("--only", only, "run just these criteria");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::function<Verdict()>> criteria{criterion_1, criterion_2, criterion_3, criterion_4,
                                                         criterion_5, criterion_6, criterion_7, criterion_8};
    const std::set<int> expected(known.begin(), known.end());
    const std::set<int> selected(only.begin(), only.end());
    int status = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!selected.empty() && !selected.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[i]();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool known_failure = expected.count(id) > 0;
        std::cout << (v.passed ? "PASS" : "FAIL") << " criterion " << id << " [" << fmt(seconds, 3) << " s] "
                  << v.detail << (known_failure && !v.passed ? "  (known failure)" : "") << std::endl;
        if (v.passed == known_failure) status = 1;
    }
    return status;
}
