#include "tconv/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "json.hpp"
#include "tconv/errors.hpp"
#include "tconv/rng.hpp"

namespace tconv {
namespace {

constexpr std::size_t kColumns = 9;

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view s, const char* field) {
  s = trim(s);
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw std::invalid_argument(std::string("bad ") + field + " value '" + std::string(s) + "'");
  return value;
}

std::optional<std::int64_t> parse_optional_int(std::string_view s, const char* field) {
  s = trim(s);
  if (s.empty() || s == "NA") return std::nullopt;
  return parse_number<std::int64_t>(s, field);
}

// Splits one CSV record. Returns false when the record ends inside quotes.
bool split_record(std::string_view record, std::vector<std::string>& fields) {
  fields.clear();
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < record.size(); ++i) {
    const char ch = record[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < record.size() && record[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else if (ch != '\r') {
      current.push_back(ch);
    }
  }
  fields.push_back(std::move(current));
  return !quoted;
}

std::size_t count_quotes(std::string_view s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '"')); }

CallType parse_call_type(std::string_view s) {
  if (s == "A") return CallType::central;
  if (s == "B") return CallType::stand;
  if (s == "C") return CallType::street;
  throw std::invalid_argument("bad CALL_TYPE '" + std::string(s) + "'");
}

DayType parse_day_type(std::string_view s) {
  if (s == "A") return DayType::normal;
  if (s == "B") return DayType::holiday;
  if (s == "C") return DayType::holiday_eve;
  throw std::invalid_argument("bad DAY_TYPE '" + std::string(s) + "'");
}

char code(CallType c) { return "ABC"[static_cast<int>(c)]; }
char code(DayType d) { return "ABC"[static_cast<int>(d)]; }

Trip parse_row(const std::vector<std::string>& f) {
  if (f.size() != kColumns)
    throw std::invalid_argument("expected 9 columns, found " + std::to_string(f.size()));
  Trip t;
  t.trip_id = f[0];
  t.call_type = parse_call_type(trim(f[1]));
  t.origin_call = parse_optional_int(f[2], "ORIGIN_CALL");
  t.origin_stand = parse_optional_int(f[3], "ORIGIN_STAND");
  t.taxi_id = parse_number<std::int64_t>(f[4], "TAXI_ID");
  t.timestamp = parse_number<std::int64_t>(f[5], "TIMESTAMP");
  t.day_type = parse_day_type(trim(f[6]));
  const std::string_view missing = trim(f[7]);
  if (missing == "True" || missing == "TRUE" || missing == "true") {
    t.missing_data = true;
  } else if (missing == "False" || missing == "FALSE" || missing == "false") {
    t.missing_data = false;
  } else {
    throw std::invalid_argument("bad MISSING_DATA '" + std::string(missing) + "'");
  }
  t.points = parse_polyline(f[8]);
  return t;
}

std::string strip_bom(std::string s) {
  if (s.size() >= 3 && static_cast<unsigned char>(s[0]) == 0xEF &&
      static_cast<unsigned char>(s[1]) == 0xBB && static_cast<unsigned char>(s[2]) == 0xBF)
    s.erase(0, 3);
  return s;
}

}  // namespace

Metadata extract_metadata(const Trip& t) {
  using namespace std::chrono;
  Metadata m{};
  const std::int64_t day = t.timestamp >= 0 ? t.timestamp / 86400 : (t.timestamp - 86399) / 86400;
  const std::int64_t second_of_day = t.timestamp - day * 86400;
  m[kQuarterHour] = static_cast<std::size_t>(second_of_day / 900);
  const sys_days date{days{day}};
  m[kDayOfWeek] = weekday{date}.iso_encoding() - 1;  // Monday = 0
  const year_month_day ymd{date};
  const auto day_of_year = (date - sys_days{ymd.year() / January / 1}).count();
  m[kWeekOfYear] = std::min<std::size_t>(static_cast<std::size_t>(day_of_year / 7), 51);
  m[kCallType] = static_cast<std::size_t>(t.call_type);
  if (t.origin_stand && *t.origin_stand >= 1)
    m[kOriginStand] = static_cast<std::size_t>((*t.origin_stand - 1) % 63) + 1;
  m[kTaxi] = static_cast<std::size_t>(mix64(static_cast<std::uint64_t>(t.taxi_id)) % kMetaCardinality[kTaxi]);
  return m;
}

std::vector<GeoPoint> parse_polyline(std::string_view text) {
  std::vector<GeoPoint> points;
  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
  };
  auto expect = [&](char ch) {
    skip_ws();
    if (i >= text.size() || text[i] != ch)
      throw std::invalid_argument(std::string("polyline: expected '") + ch + "'");
    ++i;
  };
  auto number = [&] {
    skip_ws();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data() + i, text.data() + text.size(), v);
    if (ec != std::errc{}) throw std::invalid_argument("polyline: bad coordinate");
    i = static_cast<std::size_t>(ptr - text.data());
    return v;
  };

  expect('[');
  skip_ws();
  if (i < text.size() && text[i] == ']') {
    ++i;
  } else {
    while (true) {
      expect('[');
      GeoPoint p;
      p.lon = number();
      expect(',');
      p.lat = number();
      expect(']');
      if (!is_valid(p)) throw std::invalid_argument("polyline: coordinate out of range");
      points.push_back(p);
      skip_ws();
      if (i < text.size() && text[i] == ',') {
        ++i;
        continue;
      }
      expect(']');
      break;
    }
  }
  skip_ws();
  if (i != text.size()) throw std::invalid_argument("polyline: trailing characters");
  return points;
}

std::string format_polyline(const std::vector<GeoPoint>& points) {
  std::string s = "[";
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i) s += ',';
    s += '[';
    s += format_double(points[i].lon);
    s += ',';
    s += format_double(points[i].lat);
    s += ']';
  }
  s += ']';
  return s;
}

std::string format_trip_row(const Trip& t) {
  auto quote = [](std::string_view v) {
    std::string q = "\"";
    for (char ch : v) {
      if (ch == '"') q += '"';
      q += ch;
    }
    q += '"';
    return q;
  };
  auto opt = [](const std::optional<std::int64_t>& v) { return v ? std::to_string(*v) : std::string(); };
  std::string row;
  row += quote(t.trip_id) + ',';
  row += quote(std::string(1, code(t.call_type))) + ',';
  row += quote(opt(t.origin_call)) + ',';
  row += quote(opt(t.origin_stand)) + ',';
  row += quote(std::to_string(t.taxi_id)) + ',';
  row += quote(std::to_string(t.timestamp)) + ',';
  row += quote(std::string(1, code(t.day_type))) + ',';
  row += quote(t.missing_data ? "True" : "False") + ',';
  row += quote(format_polyline(t.points));
  return row;
}

void write_trips(std::ostream& out, const std::vector<Trip>& trips) {
  out << kTripCsvHeader << '\n';
  for (const Trip& t : trips) out << format_trip_row(t) << '\n';
}

ParseResult parse_trips(std::istream& in, std::optional<std::size_t> limit) {
  ParseResult result;
  std::string line;
  if (!std::getline(in, line)) throw MissingHeaderError("empty input: missing CSV header");
  line = strip_bom(line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> fields;
  if (!split_record(line, fields) || fields.size() != kColumns || fields[0] != "TRIP_ID" ||
      fields[8] != "POLYLINE")
    throw MissingHeaderError("missing or unexpected CSV header: " + line);

  std::size_t line_no = 1;
  while (!limit || result.trips.size() < *limit) {
    if (!std::getline(in, line)) break;
    ++line_no;
    const std::size_t first_line = line_no;
    std::string record = line;
    // Quoted fields may span physical lines.
    while (count_quotes(record) % 2 == 1) {
      if (!std::getline(in, line))
        throw TruncatedInputError("input ends inside a quoted field (record starting at line " +
                                  std::to_string(first_line) + ")");
      ++line_no;
      record += '\n';
      record += line;
    }
    if (trim(record).empty()) continue;
    split_record(record, fields);
    try {
      result.trips.push_back(parse_row(fields));
    } catch (const std::exception& e) {
      result.errors.push_back({first_line, e.what()});
    }
  }
  return result;
}

const char* to_string(RejectReason r) {
  switch (r) {
    case RejectReason::missing_data:
      return "missing_data";
    case RejectReason::too_short:
      return "too_short";
    case RejectReason::gps_jump:
      return "gps_jump";
  }
  return "unknown";
}

std::optional<RejectReason> rejection(const Trip& t) {
  if (t.missing_data) return RejectReason::missing_data;
  if (t.points.size() < 2) return RejectReason::too_short;
  for (std::size_t i = 1; i < t.points.size(); ++i)
    if (haversine(t.points[i - 1], t.points[i]) > kMaxJumpM) return RejectReason::gps_jump;
  return std::nullopt;
}

std::size_t prefix_length(std::size_t n, double cut) {
  const auto k = static_cast<std::size_t>(std::ceil(cut * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n);
}

Example make_example(const Trip& t, double cut) {
  if (!(cut > 0.0 && cut <= 1.0)) throw std::invalid_argument("cut must lie in (0, 1]");
  if (auto r = rejection(t))
    throw std::invalid_argument("trip " + t.trip_id + " is not usable: " + to_string(*r));
  const std::size_t n = t.points.size();
  const std::size_t k = prefix_length(n, cut);
  Example ex;
  ex.trip_id = t.trip_id;
  ex.prefix.assign(t.points.begin(), t.points.begin() + static_cast<std::ptrdiff_t>(k));
  ex.meta = extract_metadata(t);
  ex.target = t.destination();
  ex.completeness = static_cast<double>(k) / static_cast<double>(n);
  return ex;
}

Split split(const std::vector<Trip>& trips, std::uint64_t seed, double test_fraction) {
  if (trips.empty()) throw std::invalid_argument("split: no trips");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("split: test_fraction must lie in (0, 1)");
  std::vector<std::size_t> order(trips.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  shuffle(order, rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(trips.size())));

  Split s;
  s.test.reserve(n_test);
  s.train.reserve(trips.size() - n_test);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Trip& t = trips[order[i]];
    if (i < n_test) {
      // 1 - U[0,1) is uniform on (0, 1], the admissible cut range.
      s.test.push_back(make_example(t, 1.0 - rng.uniform()));
    } else {
      if (auto r = rejection(t))
        throw std::invalid_argument("trip " + t.trip_id + " is not usable: " + to_string(*r));
      s.train.push_back(t);
    }
  }
  return s;
}

void write_examples(std::ostream& out, const std::vector<Example>& examples,
                    std::string_view truncation) {
  nlohmann::json header = {{"schema", kExampleSchema},
                           {"truncation", truncation},
                           {"count", examples.size()},
                           {"meta_fields", kMetaFieldNames}};
  out << header.dump() << '\n';
  for (const Example& ex : examples) {
    nlohmann::json prefix = nlohmann::json::array();
    for (const GeoPoint& p : ex.prefix) prefix.push_back({p.lon, p.lat});
    nlohmann::json rec = {{"trip_id", ex.trip_id},
                          {"prefix", prefix},
                          {"target", {ex.target.lon, ex.target.lat}},
                          {"completeness", ex.completeness},
                          {"meta", ex.meta}};
    out << rec.dump() << '\n';
  }
}

std::vector<Example> read_examples(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw MissingHeaderError("example file is empty");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw MissingHeaderError(std::string("example file header is not JSON: ") + e.what());
  }
  if (!header.is_object() || header.value("schema", "") != kExampleSchema)
    throw SchemaError("example file has unexpected schema");

  std::vector<Example> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      Example ex;
      ex.trip_id = rec.at("trip_id").get<std::string>();
      for (const auto& p : rec.at("prefix")) ex.prefix.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      ex.target = {rec.at("target").at(0).get<double>(), rec.at("target").at(1).get<double>()};
      ex.completeness = rec.at("completeness").get<double>();
      ex.meta = rec.at("meta").get<Metadata>();
      if (ex.prefix.empty()) throw SchemaError("empty prefix");
      for (std::size_t f = 0; f < kMetaFieldCount; ++f)
        if (ex.meta[f] >= kMetaCardinality[f]) throw SchemaError("metadata value out of range");
      out.push_back(std::move(ex));
    } catch (const std::exception& e) {
      throw SchemaError("example file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace tconv
