#include "softfly/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "softfly/binary_io.hpp"
#include "softfly/parallel.hpp"

namespace softfly {

using nlohmann::json;

namespace {

constexpr std::uint64_t kEvalStream = 0x4556414c;

std::uint64_t unhex(const std::string& s) {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos, 16);
    if (pos != s.size()) throw FormatError("bad hex value '" + s + "'");
    return v;
}

double median_of(std::vector<double> v) { return quantile(std::move(v), 0.5); }

}  // namespace

void EvalProtocol::validate() const {
    if (episodes < 1) throw std::invalid_argument("eval: episodes must be >= 1");
    if (horizon < 1) throw std::invalid_argument("eval: horizon must be >= 1");
    if (!seeds.empty()) {
        if (seeds.size() != static_cast<std::size_t>(episodes))
            throw std::invalid_argument("eval: seed list length must equal episodes");
        if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
            throw std::invalid_argument("eval: seeds must be unique");
    }
    if (!(settle_s >= 0.0)) throw std::invalid_argument("eval: settle_s must be >= 0");
    if (threads < 1) throw std::invalid_argument("eval: threads must be >= 1");
    ranges.validate();
}

std::vector<std::uint64_t> EvalProtocol::episode_seeds() const {
    if (!seeds.empty()) return seeds;
    std::vector<std::uint64_t> out(static_cast<std::size_t>(episodes));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = derive_seed(base_seed, kEvalStream, i);
    return out;
}

std::uint64_t hash_protocol(const EvalProtocol& p, const EpisodeConfig& episode, const RewardConfig& reward) {
    Fnv1a h;
    h.update_value(p.episodes);
    h.update_value(p.horizon);
    for (auto s : p.episode_seeds()) h.update_value(s);
    hash_into(h, p.ranges);
    h.update_value(p.deterministic);
    h.update_value(p.settle_s);
    hash_into(h, episode);
    hash_into(h, reward);
    return h.digest();
}

EpisodeSample draw_episode(const EvalProtocol& p, const RobotParams& nominal, const EpisodeConfig& episode,
                           std::uint64_t seed) {
    Rng rng(seed);
    EpisodeSample out;
    out.domain = sample_domain(p.ranges, nominal, rng);
    out.s0 = sample_initial_state(episode, rng);
    return out;
}

std::uint64_t hash_sample(const EpisodeSample& s) {
    Fnv1a h;
    h.update_value(hash_domain(s.domain));
    const auto a = s.s0.to_array();
    h.update_doubles(a);
    return h.digest();
}

double fluctuation_metric(const Trajectory& traj) {
    if (traj.actions.size() < 2) throw std::invalid_argument("fluctuation_metric: need at least two actions");
    double acc = 0.0;
    for (std::size_t t = 1; t < traj.actions.size(); ++t) {
        const double d = traj.actions[t].thrust - traj.actions[t - 1].thrust;
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(traj.actions.size() - 1));
}

RmseMetrics rmse_metrics(const Trajectory& traj, double settle_s) {
    const auto first = static_cast<std::size_t>(std::ceil(settle_s / kControlDt - 1e-9));
    if (traj.states.size() <= first) throw std::invalid_argument("rmse_metrics: trajectory shorter than settle time");
    double lat = 0.0, alt = 0.0;
    for (std::size_t t = first; t < traj.states.size(); ++t) {
        const auto& p = traj.states[t].pos;
        lat += p.x() * p.x() + p.y() * p.y();
        alt += p.z() * p.z();
    }
    const double n = static_cast<double>(traj.states.size() - first);
    return {std::sqrt(lat / n), std::sqrt(alt / n)};
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("quantile: empty input");
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile: q outside [0, 1]");
    std::sort(values.begin(), values.end());
    const double h = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

BoxStats box_stats(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("box_stats: empty input");
    BoxStats b;
    b.n = values.size();
    b.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(b.n);
    b.median = quantile(values, 0.5);
    b.q1 = quantile(values, 0.25);
    b.q3 = quantile(values, 0.75);
    const double iqr = b.q3 - b.q1;
    const double lo = b.q1 - 1.5 * iqr;
    const double hi = b.q3 + 1.5 * iqr;
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    b.whisker_low = b.q1;
    b.whisker_high = b.q3;
    bool have = false;
    for (double v : sorted) {
        if (v < lo || v > hi) {
            b.outliers.push_back(v);
            continue;
        }
        if (!have) b.whisker_low = v;
        b.whisker_high = v;
        have = true;
    }
    return b;
}

std::vector<double> EvalReport::rewards() const {
    std::vector<double> v;
    v.reserve(episodes.size());
    for (const auto& e : episodes) v.push_back(e.total_reward);
    return v;
}

std::vector<double> EvalReport::fluctuations() const {
    std::vector<double> v;
    v.reserve(episodes.size());
    for (const auto& e : episodes) v.push_back(e.fluctuation);
    return v;
}

BoxStats EvalReport::reward_stats() const { return box_stats(rewards()); }

double EvalReport::mean_fluctuation() const {
    const auto f = fluctuations();
    if (f.empty()) return 0.0;
    return std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size());
}

int EvalReport::failures() const {
    return static_cast<int>(std::count_if(episodes.begin(), episodes.end(), [](const auto& e) { return e.failed; }));
}

json to_json(const EvalReport& r) {
    json eps = json::array();
    for (const auto& e : r.episodes) {
        eps.push_back({{"seed", e.seed},
                       {"sample_hash", hex64(e.sample_hash)},
                       {"total_reward", e.total_reward},
                       {"failed", e.failed},
                       {"steps", e.steps},
                       {"fluctuation", e.fluctuation},
                       {"lateral_rmse", e.lateral_rmse},
                       {"altitude_rmse", e.altitude_rmse}});
    }
    json j = {{"version", EvalReport::kVersion},
              {"controller", r.controller},
              {"checkpoint_hash", hex64(r.checkpoint_hash)},
              {"protocol_hash", hex64(r.protocol_hash)},
              {"config_hash", hex64(r.config_hash)},
              {"episodes", eps}};
    if (!r.episodes.empty()) {
        const BoxStats b = r.reward_stats();
        j["summary"] = {{"n", b.n},
                        {"mean", b.mean},
                        {"median", b.median},
                        {"q1", b.q1},
                        {"q3", b.q3},
                        {"whisker_low", b.whisker_low},
                        {"whisker_high", b.whisker_high},
                        {"outliers", b.outliers},
                        {"failures", r.failures()},
                        {"mean_fluctuation", r.mean_fluctuation()}};
    }
    return j;
}

EvalReport report_from_json(const json& j) {
    try {
        if (j.at("version").get<int>() != EvalReport::kVersion)
            throw FormatError("eval report: unsupported version " + j.at("version").dump());
        EvalReport r;
        r.controller = j.at("controller").get<std::string>();
        r.checkpoint_hash = unhex(j.at("checkpoint_hash").get<std::string>());
        r.protocol_hash = unhex(j.at("protocol_hash").get<std::string>());
        r.config_hash = unhex(j.at("config_hash").get<std::string>());
        for (const auto& e : j.at("episodes")) {
            EpisodeRecord rec;
            rec.seed = e.at("seed").get<std::uint64_t>();
            rec.sample_hash = unhex(e.at("sample_hash").get<std::string>());
            rec.total_reward = e.at("total_reward").get<double>();
            rec.failed = e.at("failed").get<bool>();
            rec.steps = e.at("steps").get<int>();
            rec.fluctuation = e.at("fluctuation").get<double>();
            rec.lateral_rmse = e.at("lateral_rmse").get<double>();
            rec.altitude_rmse = e.at("altitude_rmse").get<double>();
            r.episodes.push_back(rec);
        }
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("eval report: ") + e.what());
    }
}

void write_report(const EvalReport& r, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << to_json(r).dump(2) << '\n';
    if (!os) throw IoError("write failed: " + path);
}

EvalReport read_report(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    return report_from_json(j);
}

ControllerFactory fixed_controller(Controller c) {
    return [c = std::move(c)](std::uint64_t) { return c; };
}

ControllerFactory policy_controller(const MlpParams& policy, const RobotParams& nominal, bool deterministic) {
    auto p = std::make_shared<const MlpParams>(policy);
    if (deterministic) {
        return [p](std::uint64_t) -> Controller { return [p](const State& s) { return policy_mean(*p, s); }; };
    }
    return [p, nominal](std::uint64_t seed) -> Controller {
        auto rng = std::make_shared<Rng>(seed);
        return [p, rng, nominal](const State& s) {
            Eigen::VectorXd y = forward_scaled(*p, s.to_array());
            for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += std::exp(p->log_std(i)) * rng->normal();
            return saturate(unscale_action(*p, y.head<3>()), nominal);
        };
    };
}

Trajectory rollout_episode(const Controller& controller, const EvalProtocol& protocol, const RobotParams& nominal,
                           const RewardConfig& reward, const EpisodeConfig& episode, std::uint64_t seed) {
    EpisodeConfig ec = episode;
    ec.horizon = protocol.horizon;
    const EpisodeSample sample = draw_episode(protocol, nominal, ec, seed);
    return run_episode(controller, sample.domain, sample.s0, reward, ec, seed);
}

EvalReport evaluate(const ControllerFactory& factory, const EvalProtocol& protocol, const RobotParams& nominal,
                    const RewardConfig& reward, const EpisodeConfig& episode, const std::string& tag) {
    protocol.validate();
    EpisodeConfig ec = episode;
    ec.horizon = protocol.horizon;
    ec.validate();
    const auto seeds = protocol.episode_seeds();
    EvalReport report;
    report.controller = tag;
    report.protocol_hash = hash_protocol(protocol, episode, reward);
    report.episodes.resize(seeds.size());
    parallel_for(seeds.size(), protocol.threads, [&](std::size_t i) {
        const EpisodeSample sample = draw_episode(protocol, nominal, ec, seeds[i]);
        const Controller c = factory(derive_seed(seeds[i], kEvalStream, 1));
        const Trajectory traj = run_episode(c, sample.domain, sample.s0, reward, ec, seeds[i]);
        EpisodeRecord& rec = report.episodes[i];
        rec.seed = seeds[i];
        rec.sample_hash = hash_sample(sample);
        rec.total_reward = traj.total_reward();
        rec.failed = traj.failed;
        rec.steps = static_cast<int>(traj.steps());
        rec.fluctuation = traj.actions.size() >= 2 ? fluctuation_metric(traj) : 0.0;
        const bool settled = traj.states.size() > static_cast<std::size_t>(std::ceil(protocol.settle_s / kControlDt));
        const RmseMetrics m = rmse_metrics(traj, settled ? protocol.settle_s : 0.0);
        rec.lateral_rmse = m.lateral;
        rec.altitude_rmse = m.altitude;
    });
    return report;
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path, std::uint64_t config_hash) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    if (config_hash != 0) os << "# config_hash=" << hex64(config_hash) << '\n';
    os << "t_ms,x,y,z,qx,qy,qz,qw,vx,vy,vz,p,q,r,F,tau_x,tau_y,reward\n";
    os << std::setprecision(17);
    for (std::size_t t = 0; t < traj.actions.size(); ++t) {
        os << t;
        for (double v : traj.states[t].to_array()) os << ',' << v;
        const Action& a = traj.actions[t];
        os << ',' << a.thrust << ',' << a.tau_x << ',' << a.tau_y << ',' << traj.rewards[t] << '\n';
    }
    if (!os) throw IoError("write failed: " + path);
}

void require_paired(const EvalReport& a, const EvalReport& b) {
    if (a.episodes.size() != b.episodes.size())
        throw SeedMismatchError("paired comparison: episode counts differ");
    for (std::size_t i = 0; i < a.episodes.size(); ++i) {
        if (a.episodes[i].seed != b.episodes[i].seed || a.episodes[i].sample_hash != b.episodes[i].sample_hash)
            throw SeedMismatchError("paired comparison: episode " + std::to_string(i) + " was drawn differently");
    }
}

bool MedianDelta::significant() const { return std::abs(delta) > ci_width(); }

MedianDelta paired_median_delta(const EvalReport& a, const EvalReport& b, int resamples, std::uint64_t seed) {
    require_paired(a, b);
    if (a.episodes.empty()) throw std::invalid_argument("paired_median_delta: empty reports");
    if (resamples < 1) throw std::invalid_argument("paired_median_delta: resamples must be positive");
    const auto ra = a.rewards();
    const auto rb = b.rewards();
    MedianDelta out;
    out.delta = median_of(rb) - median_of(ra);
    Rng rng(seed);
    const auto n = ra.size();
    std::vector<double> xa(n), xb(n), diffs(static_cast<std::size_t>(resamples));
    for (auto& d : diffs) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n - 1)));
            xa[i] = ra[j];
            xb[i] = rb[j];
        }
        d = median_of(xb) - median_of(xa);
    }
    out.ci_low = quantile(diffs, 0.025);
    out.ci_high = quantile(diffs, 0.975);
    return out;
}

bool Comparison::ordered_increasing() const {
    for (std::size_t i = 0; i + 1 < stats.size(); ++i) {
        if (!(stats[i + 1].median > stats[i].median) || !deltas[i][i + 1].significant()) return false;
    }
    return true;
}

bool Comparison::means_within_band(std::size_t reference, double fraction) const {
    if (reference >= stats.size()) throw std::out_of_range("means_within_band: bad reference index");
    const double ref = stats[reference].mean;
    return std::all_of(stats.begin(), stats.end(),
                       [&](const BoxStats& b) { return std::abs(b.mean - ref) <= fraction * std::abs(ref); });
}

Comparison compare_reports(const std::vector<EvalReport>& reports, const std::vector<std::string>& names,
                           const std::vector<double>& axis, const std::string& axis_name) {
    if (reports.empty()) throw std::invalid_argument("compare_reports: no reports");
    if (names.size() != reports.size()) throw std::invalid_argument("compare_reports: one name per report");
    if (!axis.empty() && axis.size() != reports.size())
        throw std::invalid_argument("compare_reports: axis must have one value per report");
    for (std::size_t i = 1; i < reports.size(); ++i) require_paired(reports[0], reports[i]);
    Comparison c;
    c.names = names;
    c.axis = axis;
    c.axis_name = axis_name;
    for (const auto& r : reports) {
        c.stats.push_back(r.reward_stats());
        c.mean_fluctuation.push_back(r.mean_fluctuation());
    }
    c.deltas.assign(reports.size(), std::vector<MedianDelta>(reports.size()));
    for (std::size_t i = 0; i < reports.size(); ++i)
        for (std::size_t j = 0; j < reports.size(); ++j)
            if (i != j) c.deltas[i][j] = paired_median_delta(reports[i], reports[j]);
    return c;
}

json to_json(const Comparison& c) {
    json rows = json::array();
    for (std::size_t i = 0; i < c.names.size(); ++i) {
        const BoxStats& b = c.stats[i];
        json row = {{"name", c.names[i]},
                    {"n", b.n},
                    {"mean", b.mean},
                    {"median", b.median},
                    {"q1", b.q1},
                    {"q3", b.q3},
                    {"whisker_low", b.whisker_low},
                    {"whisker_high", b.whisker_high},
                    {"outliers", b.outliers},
                    {"mean_fluctuation", c.mean_fluctuation[i]}};
        if (!c.axis.empty()) row[c.axis_name.empty() ? "axis" : c.axis_name] = c.axis[i];
        rows.push_back(row);
    }
    json deltas = json::array();
    for (std::size_t i = 0; i < c.names.size(); ++i)
        for (std::size_t j = i + 1; j < c.names.size(); ++j) {
            const MedianDelta& d = c.deltas[i][j];
            deltas.push_back({{"from", c.names[i]},
                              {"to", c.names[j]},
                              {"median_delta", d.delta},
                              {"ci_low", d.ci_low},
                              {"ci_high", d.ci_high},
                              {"significant", d.significant()}});
        }
    return {{"version", EvalReport::kVersion},
            {"controllers", rows},
            {"median_deltas", deltas},
            {"ordered_increasing", c.ordered_increasing()},
            {"means_within_20pct_of_first", c.means_within_band(0, 0.2)}};
}

void write_comparison(const Comparison& c, const std::string& csv_path, const std::string& json_path) {
    if (!csv_path.empty()) {
        std::ofstream os(csv_path);
        if (!os) throw IoError("cannot open " + csv_path + " for writing");
        os << std::setprecision(12);
        os << "name," << (c.axis_name.empty() ? "axis" : c.axis_name)
           << ",n,mean,median,q1,q3,whisker_low,whisker_high,outliers,mean_fluctuation,delta_vs_first,ci_low,ci_high\n";
        for (std::size_t i = 0; i < c.names.size(); ++i) {
            const BoxStats& b = c.stats[i];
            os << c.names[i] << ',';
            if (!c.axis.empty()) os << c.axis[i];
            os << ',' << b.n << ',' << b.mean << ',' << b.median << ',' << b.q1 << ',' << b.q3 << ','
               << b.whisker_low << ',' << b.whisker_high << ',' << b.outliers.size() << ',' << c.mean_fluctuation[i];
            if (i == 0) os << ",0,0,0\n";
            else os << ',' << c.deltas[0][i].delta << ',' << c.deltas[0][i].ci_low << ',' << c.deltas[0][i].ci_high << '\n';
        }
        if (!os) throw IoError("write failed: " + csv_path);
    }
    if (!json_path.empty()) {
        std::ofstream os(json_path);
        if (!os) throw IoError("cannot open " + json_path + " for writing");
        os << to_json(c).dump(2) << '\n';
        if (!os) throw IoError("write failed: " + json_path);
    }
}

}  // namespace softfly
