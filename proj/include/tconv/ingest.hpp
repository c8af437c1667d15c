#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tconv/geo.hpp"

namespace tconv {

enum class CallType { central, stand, street };  // CSV codes A, B, C
enum class DayType { normal, holiday, holiday_eve };  // CSV codes A, B, C

/// One taxi journey as recorded in the competition CSV.
struct Trip {
  std::string trip_id;
  CallType call_type = CallType::street;
  std::optional<std::int64_t> origin_call;
  std::optional<std::int64_t> origin_stand;
  std::int64_t taxi_id = 0;
  std::int64_t timestamp = 0;  // unix seconds, UTC
  DayType day_type = DayType::normal;
  bool missing_data = false;
  std::vector<GeoPoint> points;

  GeoPoint destination() const { return points.back(); }

  friend bool operator==(const Trip&, const Trip&) = default;
};

/// Categorical metadata fed to the embedding tables, in a fixed field order.
enum MetaField : std::size_t {
  kQuarterHour = 0,
  kDayOfWeek,
  kWeekOfYear,
  kCallType,
  kOriginStand,
  kTaxi,
  kMetaFieldCount
};
inline constexpr std::array<std::size_t, kMetaFieldCount> kMetaCardinality = {96, 7, 52, 3, 64, 448};
inline constexpr std::array<const char*, kMetaFieldCount> kMetaFieldNames = {
    "quarter_hour", "day_of_week", "week_of_year", "call_type", "origin_stand", "taxi"};

using Metadata = std::array<std::size_t, kMetaFieldCount>;

Metadata extract_metadata(const Trip& t);

/// Observed trajectory prefix paired with the trip's true destination.
struct Example {
  std::string trip_id;
  std::vector<GeoPoint> prefix;
  Metadata meta{};
  GeoPoint target;
  double completeness = 1.0;  // prefix length / full length

  friend bool operator==(const Example&, const Example&) = default;
};

struct RowError {
  std::size_t line = 0;  // 1-based, header is line 1
  std::string message;
};

struct ParseResult {
  std::vector<Trip> trips;
  std::vector<RowError> errors;
};

inline constexpr std::string_view kTripCsvHeader =
    "\"TRIP_ID\",\"CALL_TYPE\",\"ORIGIN_CALL\",\"ORIGIN_STAND\",\"TAXI_ID\",\"TIMESTAMP\","
    "\"DAY_TYPE\",\"MISSING_DATA\",\"POLYLINE\"";

/// Reads competition-format rows. Malformed rows are reported in
/// ParseResult::errors. Throws MissingHeaderError when the header is absent
/// or wrong and TruncatedInputError when the stream ends inside a quoted
/// field. `limit` caps the number of trips returned.
ParseResult parse_trips(std::istream& in, std::optional<std::size_t> limit = std::nullopt);

std::vector<GeoPoint> parse_polyline(std::string_view text);
std::string format_polyline(const std::vector<GeoPoint>& points);

/// One CSV row (no trailing newline) that parse_trips reads back unchanged.
std::string format_trip_row(const Trip& t);
void write_trips(std::ostream& out, const std::vector<Trip>& trips);

enum class RejectReason { missing_data, too_short, gps_jump };
const char* to_string(RejectReason r);

/// Consecutive fixes further apart than this are treated as GPS noise.
inline constexpr double kMaxJumpM = 3000.0;

/// Why a trip cannot be used for training, or nullopt if it can.
std::optional<RejectReason> rejection(const Trip& t);
inline bool is_trainable(const Trip& t) { return !rejection(t).has_value(); }

/// Number of points kept for a cut fraction: ceil(cut * n), at least 1.
std::size_t prefix_length(std::size_t n, double cut);

/// Throws std::invalid_argument for untrainable trips or cut outside (0, 1].
Example make_example(const Trip& t, double cut);

struct Split {
  std::vector<Trip> train;
  std::vector<Example> test;  // each truncated at a uniform random completeness
};

/// Seeded shuffle split. All trips must be trainable.
Split split(const std::vector<Trip>& trips, std::uint64_t seed, double test_fraction);

/// Newline-delimited JSON example cache. The first line is a header record
/// naming the schema and the truncation scheme used to cut the prefixes.
inline constexpr std::string_view kExampleSchema = "tconv.examples/1";
void write_examples(std::ostream& out, const std::vector<Example>& examples,
                    std::string_view truncation);
std::vector<Example> read_examples(std::istream& in);

}  // namespace tconv
