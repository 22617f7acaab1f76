#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "sbrl/error.hpp"
#include "sbrl/market.hpp"
#include "sbrl/stable.hpp"

namespace sbrl::market {

namespace {

namespace chr = std::chrono;

std::optional<chr::sys_days> parse_date(const std::string& s) {
    int y = 0;
    unsigned m = 0, d = 0;
    char dash1 = 0, dash2 = 0;
    std::istringstream in(s);
    in >> y >> dash1 >> m >> dash2 >> d;
    if (!in || dash1 != '-' || dash2 != '-' || s.size() != 10 || in.peek() != EOF) return std::nullopt;
    const chr::year_month_day ymd{chr::year{y}, chr::month{m}, chr::day{d}};
    if (!ymd.ok()) return std::nullopt;
    return chr::sys_days{ymd};
}

std::string format_date(chr::sys_days day) {
    const chr::year_month_day ymd{day};
    std::ostringstream out;
    out << std::setfill('0') << std::setw(4) << static_cast<int>(ymd.year()) << '-' << std::setw(2)
        << static_cast<unsigned>(ymd.month()) << '-' << std::setw(2) << static_cast<unsigned>(ymd.day());
    return out.str();
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        if (!field.empty() && field.back() == '\r') field.pop_back();
        out.push_back(field);
    }
    return out;
}

[[noreturn]] void row_error(const std::string& path, std::size_t row, const std::string& what) {
    std::ostringstream msg;
    msg << path << " row " << row << ": " << what;
    throw DataError(msg.str());
}

struct Bar {
    double o, h, l, c, v;
    std::size_t row;
};

Mat rows_of(const Mat& m, std::size_t begin, std::size_t end) {
    return m.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
}

}  // namespace

OhlcvSeries OhlcvSeries::slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > days()) throw DomainError("series slice out of range");
    OhlcvSeries s;
    s.dates.assign(dates.begin() + static_cast<std::ptrdiff_t>(begin), dates.begin() + static_cast<std::ptrdiff_t>(end));
    s.tickers = tickers;
    s.open = rows_of(open, begin, end);
    s.high = rows_of(high, begin, end);
    s.low = rows_of(low, begin, end);
    s.close = rows_of(close, begin, end);
    s.volume = rows_of(volume, begin, end);
    return s;
}

OhlcvSeries load_ohlcv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    const std::vector<std::string> expected{"date", "ticker", "open", "high", "low", "close", "volume"};
    if (split_csv(line) != expected) throw DataError(path + ": header must be date,ticker,open,high,low,close,volume");

    std::vector<std::string> tickers;
    std::map<std::string, std::map<chr::sys_days, Bar>> bars;
    std::map<std::string, chr::sys_days> last;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const auto f = split_csv(line);
        if (f.size() != 7) row_error(path, row, "expected 7 fields");
        const auto day = parse_date(f[0]);
        if (!day) row_error(path, row, "bad date '" + f[0] + "'");
        double v[5];
        for (int k = 0; k < 5; ++k) {
            std::size_t used = 0;
            try {
                v[k] = std::stod(f[2 + k], &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != f[2 + k].size() || !std::isfinite(v[k]))
                row_error(path, row, "bad number '" + f[2 + k] + "' in column " + expected[2 + k]);
        }
        for (int k = 0; k < 4; ++k)
            if (!(v[k] > 0.0)) row_error(path, row, "non-positive price in column " + expected[2 + k]);
        if (v[4] < 0.0) row_error(path, row, "negative volume");
        const std::string& ticker = f[1];
        if (!bars.count(ticker)) tickers.push_back(ticker);
        auto& series = bars[ticker];
        if (series.count(*day)) row_error(path, row, "duplicate date " + f[0] + " for " + ticker);
        if (last.count(ticker) && *day < last[ticker]) row_error(path, row, "dates out of order for " + ticker);
        last[ticker] = *day;
        series.emplace(*day, Bar{v[0], v[1], v[2], v[3], v[4], row});
    }
    if (tickers.empty()) throw DataError(path + ": no rows");

    const auto& ref = bars[tickers[0]];
    for (const auto& t : tickers) {
        const auto& s = bars[t];
        for (const auto& [day, bar] : s)
            for (const auto& other : tickers)
                if (!bars[other].count(day))
                    row_error(path, bar.row, "date " + format_date(day) + " of " + t + " is missing for " + other);
    }

    OhlcvSeries out;
    out.tickers = tickers;
    const auto T = static_cast<Eigen::Index>(ref.size());
    const auto D = static_cast<Eigen::Index>(tickers.size());
    for (Mat* m : {&out.open, &out.high, &out.low, &out.close, &out.volume}) m->resize(T, D);
    Eigen::Index t = 0;
    for (const auto& [day, unused] : ref) {
        out.dates.push_back(format_date(day));
        for (Eigen::Index d = 0; d < D; ++d) {
            const Bar& b = bars[tickers[static_cast<std::size_t>(d)]].at(day);
            out.open(t, d) = b.o;
            out.high(t, d) = b.h;
            out.low(t, d) = b.l;
            out.close(t, d) = b.c;
            out.volume(t, d) = b.v;
        }
        ++t;
    }
    return out;
}

void save_ohlcv(const OhlcvSeries& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "date,ticker,open,high,low,close,volume\n" << std::setprecision(17);
    for (std::size_t t = 0; t < s.days(); ++t)
        for (std::size_t d = 0; d < s.stocks(); ++d) {
            const auto i = static_cast<Eigen::Index>(t), j = static_cast<Eigen::Index>(d);
            out << s.dates[t] << ',' << s.tickers[d] << ',' << s.open(i, j) << ',' << s.high(i, j) << ','
                << s.low(i, j) << ',' << s.close(i, j) << ',' << s.volume(i, j) << '\n';
        }
}

Split split(const OhlcvSeries& series, double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("split_ratio must be in (0, 1]");
    const auto T = series.days();
    // 0.7 * 10 is not exactly 7 in binary.
    auto n = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(T) - 1e-9));
    n = std::min(n, T);
    Split out{series.slice(0, n), series.slice(n, T), std::nullopt};
    if (out.test.days() == 0) out.warning = "split leaves an empty test set";
    return out;
}

Split split_by_dates(const OhlcvSeries& series, const std::string& train_from, const std::string& train_to,
                     const std::string& test_from, const std::string& test_to) {
    for (const auto* d : {&train_from, &train_to, &test_from, &test_to})
        if (!parse_date(*d)) throw ConfigError("bad date '" + *d + "' in date_range");
    if (train_from > train_to || test_from > test_to) throw ConfigError("date_range bounds are reversed");
    if (!(train_to < test_from)) throw ConfigError("train range must end before the test range starts");
    auto range = [&](const std::string& from, const std::string& to) {
        std::size_t b = 0;
        while (b < series.days() && series.dates[b] < from) ++b;
        std::size_t e = b;
        while (e < series.days() && series.dates[e] <= to) ++e;
        return series.slice(b, e);
    };
    Split out{range(train_from, train_to), range(test_from, test_to), std::nullopt};
    if (out.train.days() == 0) throw ConfigError("train date range selects no days");
    if (out.test.days() == 0) out.warning = "test date range selects no days";
    return out;
}

OhlcvSeries synth_market(const SynthConfig& cfg, std::uint64_t seed) {
    if (cfg.stocks == 0 || cfg.days < 2) throw ConfigError("synth_market needs >= 1 stock and >= 2 days");
    if (!(cfg.correlation >= 0.0 && cfg.correlation <= 1.0)) throw ConfigError("correlation must be in [0, 1]");
    if (!(cfg.volatility >= 0.0)) throw ConfigError("volatility must be >= 0");
    if (!(cfg.max_loss > 0.0 && cfg.max_loss < 1.0)) throw ConfigError("max_loss must be in (0, 1)");
    if (!(cfg.initial_price > 0.0)) throw ConfigError("initial_price must be > 0");
    auto start = parse_date(cfg.start_date);
    if (!start) throw ConfigError("bad start_date '" + cfg.start_date + "'");

    Rng rng(derive_seed(seed, 0));
    // S(alpha, 0, 1/sqrt 2, 0) has unit variance at alpha = 2.
    std::optional<stable::StableParams> law;
    if (cfg.stable_alpha) law = stable::StableParams(*cfg.stable_alpha, 0.0, std::sqrt(0.5), 0.0);
    auto innovation = [&]() { return law ? stable::sample_one(*law, rng) : std_normal(rng); };

    const auto T = static_cast<Eigen::Index>(cfg.days);
    const auto D = static_cast<Eigen::Index>(cfg.stocks);
    if (!(cfg.periods_per_year > 0.0)) throw ConfigError("periods_per_year must be > 0");
    const double dt = 1.0 / cfg.periods_per_year;
    const double common_w = std::sqrt(cfg.correlation), own_w = std::sqrt(1.0 - cfg.correlation);

    OhlcvSeries s;
    for (Eigen::Index d = 0; d < D; ++d) s.tickers.push_back("S" + std::to_string(d + 1));
    for (Mat* m : {&s.open, &s.high, &s.low, &s.close, &s.volume}) m->resize(T, D);
    chr::sys_days day = *start;
    for (Eigen::Index t = 0; t < T; ++t) {
        while (chr::weekday{day}.iso_encoding() > 5) day += chr::days{1};
        s.dates.push_back(format_date(day));
        day += chr::days{1};
        if (t == 0) {
            s.open.row(0).setConstant(cfg.initial_price);
            s.close.row(0).setConstant(cfg.initial_price);
        } else {
            const double common = innovation();
            for (Eigen::Index d = 0; d < D; ++d) {
                const double x = common_w * common + own_w * innovation();
                const double r = std::max(cfg.drift * dt + cfg.volatility * std::sqrt(dt) * x, -cfg.max_loss);
                s.open(t, d) = s.close(t - 1, d);
                s.close(t, d) = s.close(t - 1, d) * (1.0 + r);
            }
        }
        s.high.row(t) = s.open.row(t).cwiseMax(s.close.row(t));
        s.low.row(t) = s.open.row(t).cwiseMin(s.close.row(t));
        s.volume.row(t).setConstant(1e6);
    }
    return s;
}

OhlcvSeries series_from_closes(const Mat& close, const std::string& start_date) {
    if (close.rows() == 0 || close.cols() == 0) throw DataError("series needs at least one bar and one stock");
    if (!(close.array() > 0.0).all()) throw DataError("closes must be positive");
    auto day = parse_date(start_date);
    if (!day) throw ConfigError("bad start_date '" + start_date + "'");
    OhlcvSeries s;
    for (Eigen::Index d = 0; d < close.cols(); ++d) s.tickers.push_back("S" + std::to_string(d + 1));
    s.close = close;
    s.open = close;
    for (Eigen::Index t = 1; t < close.rows(); ++t) s.open.row(t) = close.row(t - 1);
    s.high = s.open.cwiseMax(s.close);
    s.low = s.open.cwiseMin(s.close);
    s.volume = Mat::Constant(close.rows(), close.cols(), 1e6);
    for (Eigen::Index t = 0; t < close.rows(); ++t) {
        while (chr::weekday{*day}.iso_encoding() > 5) *day += chr::days{1};
        s.dates.push_back(format_date(*day));
        *day += chr::days{1};
    }
    return s;
}

}  // namespace sbrl::market
