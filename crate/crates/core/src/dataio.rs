//! Sensor CSV ingestion, corridor travel time construction and a synthetic
//! corridor generator.
//!
//! Units are miles, mph and minutes throughout. All CSV files are
//! comma-delimited UTF-8 with a header row:
//!
//! * `sensors.csv`: `sensor_id,lat,lon,order`
//! * `speeds.csv`: `timestamp,sensor_id,speed_mph` (empty speed = missing)
//! * `distances.csv`: `sensor_id,distance_mi` (segment starting at the sensor)
//! * `observations.csv`: `timestamp,y_<sensor_id>,...`

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike, Weekday};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corridor::{calibrate_lambdas, CorridorModel};
use crate::dist::{beta_sample, gamma_draw};
use crate::env_filter::{GammaState, HyperParams, ObservationRecord, ObservationSeries};
use crate::error::{Error, Result};

/// Mean Earth radius in miles.
pub const EARTH_RADIUS_MI: f64 = 3958.7613;

/// Great-circle distance in miles between two points given in degrees.
pub fn haversine_miles(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_MI * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorRecord {
    pub sensor_id: String,
    pub lat: f64,
    pub lon: f64,
    /// Position along the corridor, upstream first.
    pub order: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedRecord {
    /// Hour-truncated local time.
    pub timestamp: NaiveDateTime,
    pub sensor_id: String,
    pub speed: Option<f64>,
}

/// Timestamp format used on output.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Parse an ISO-8601 local timestamp (`T` or space separator, minutes and
/// seconds optional) and truncate it to the hour.
pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    let s = s.trim();
    const FORMATS: [&str; 6] = [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
        "%Y-%m-%dT%H",
        "%Y-%m-%d %H",
    ];
    for f in FORMATS {
        if let Ok(ts) = NaiveDateTime::parse_from_str(s, f) {
            return Ok(truncate_hour(ts));
        }
    }
    // chrono needs a minute field; handle a bare hour by hand.
    if let Some((date, hour)) = s.split_once(['T', ' ']) {
        if let (Ok(d), Ok(h)) = (NaiveDate::parse_from_str(date, "%Y-%m-%d"), hour.parse::<u32>()) {
            if let Some(ts) = d.and_hms_opt(h, 0, 0) {
                return Ok(ts);
            }
        }
    }
    Err(Error::Data(format!("invalid timestamp '{s}'")))
}

fn truncate_hour(ts: NaiveDateTime) -> NaiveDateTime {
    ts.date().and_hms_opt(ts.hour(), 0, 0).expect("valid hour")
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(false).trim(csv::Trim::All).from_reader(input)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        detail: e.to_string(),
    }
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let h = rdr.headers().map_err(csv_error)?;
    if h.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            detail: format!("expected header '{}', got '{}'", expected.join(","), h.iter().collect::<Vec<_>>().join(",")),
        });
    }
    Ok(())
}

fn parse_f64(field: &str, what: &str, line: usize) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| Error::Parse {
        line,
        detail: format!("invalid {what} '{field}'"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            detail: format!("{what} must be finite, got '{field}'"),
        });
    }
    Ok(v)
}

fn line_of(rec: &csv::StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

/// Read `sensors.csv`. Returns sensors sorted by `order`; ids must be unique
/// and orders contiguous.
pub fn read_sensors<R: Read>(input: R) -> Result<Vec<SensorRecord>> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &["sensor_id", "lat", "lon", "order"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = line_of(&rec);
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                detail: "empty sensor_id".into(),
            });
        }
        let lat = parse_f64(&rec[1], "lat", line)?;
        let lon = parse_f64(&rec[2], "lon", line)?;
        if lat.abs() > 90.0 || lon.abs() > 180.0 {
            return Err(Error::Parse {
                line,
                detail: format!("coordinates out of range ({lat}, {lon})"),
            });
        }
        let order = rec[3].parse::<i64>().map_err(|_| Error::Parse {
            line,
            detail: format!("invalid order '{}'", &rec[3]),
        })?;
        out.push(SensorRecord {
            sensor_id: id,
            lat,
            lon,
            order,
        });
    }
    validate_sensors(out)
}

fn validate_sensors(mut sensors: Vec<SensorRecord>) -> Result<Vec<SensorRecord>> {
    if sensors.is_empty() {
        return Err(Error::Data("no sensors".into()));
    }
    sensors.sort_by_key(|s| s.order);
    let mut seen = std::collections::HashSet::new();
    for s in &sensors {
        if !seen.insert(s.sensor_id.as_str()) {
            return Err(Error::Data(format!("duplicate sensor id {}", s.sensor_id)));
        }
    }
    for w in sensors.windows(2) {
        if w[1].order != w[0].order + 1 {
            return Err(Error::Data(format!(
                "sensor orders must be unique and contiguous, found {} then {}",
                w[0].order, w[1].order
            )));
        }
    }
    Ok(sensors)
}

/// Read `speeds.csv`. An empty speed field is a missing reading; any present
/// speed must be positive.
pub fn read_speeds<R: Read>(input: R) -> Result<Vec<SpeedRecord>> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &["timestamp", "sensor_id", "speed_mph"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = line_of(&rec);
        let timestamp = parse_timestamp(&rec[0]).map_err(|e| Error::Parse {
            line,
            detail: e.to_string(),
        })?;
        let speed = if rec[2].is_empty() {
            None
        } else {
            let v = parse_f64(&rec[2], "speed", line)?;
            if v <= 0.0 {
                return Err(Error::Data(format!("line {line}: speed must be positive, got {v} for sensor {}", &rec[1])));
            }
            Some(v)
        };
        out.push(SpeedRecord {
            timestamp,
            sensor_id: rec[1].to_string(),
            speed,
        });
    }
    Ok(out)
}

/// Read `distances.csv` into a map from sensor id to segment length.
pub fn read_distances<R: Read>(input: R) -> Result<BTreeMap<String, f64>> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &["sensor_id", "distance_mi"])?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = line_of(&rec);
        let d = parse_f64(&rec[1], "distance", line)?;
        if d <= 0.0 {
            return Err(Error::Data(format!("line {line}: distance must be positive, got {d}")));
        }
        if out.insert(rec[0].to_string(), d).is_some() {
            return Err(Error::Data(format!("line {line}: duplicate sensor id {}", &rec[0])));
        }
    }
    Ok(out)
}

/// Read `observations.csv`. Empty cells become NaN (missing). The first
/// column may hold a timestamp or a plain period index.
pub fn read_observations<R: Read>(input: R) -> Result<ObservationSeries> {
    let mut rdr = reader(input);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.len() < 2 || &header[0] != "timestamp" {
        return Err(Error::Parse {
            line: 1,
            detail: "expected header 'timestamp,y_<id>,...'".into(),
        });
    }
    let ids = header
        .iter()
        .skip(1)
        .map(|h| {
            h.strip_prefix("y_").filter(|s| !s.is_empty()).map(str::to_string).ok_or_else(|| Error::Parse {
                line: 1,
                detail: format!("column '{h}' must be named y_<id>"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = line_of(&rec);
        // Synthetic series carry a bare period index instead of a timestamp.
        let ts = match rec[0].parse::<usize>() {
            Ok(_) => None,
            Err(_) => Some(parse_timestamp(&rec[0]).map_err(|e| Error::Parse {
                line,
                detail: e.to_string(),
            })?),
        };
        let y = rec
            .iter()
            .skip(1)
            .map(|f| if f.is_empty() { Ok(f64::NAN) } else { parse_f64(f, "travel time", line) })
            .collect::<Result<Vec<_>>>()?;
        let mut r = ObservationRecord::new(records.len() + 1, y);
        r.timestamp = ts.map(|ts| ts.format(TIMESTAMP_FORMAT).to_string());
        records.push(r);
    }
    ObservationSeries::new(ids, records)
}

/// Write `observations.csv` with 6 decimal places; missing cells stay empty.
pub fn write_observations<W: Write>(series: &ObservationSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Data(format!("write failed: {e}"));
    let mut header = vec!["timestamp".to_string()];
    header.extend(series.segment_ids.iter().map(|id| format!("y_{id}")));
    w.write_record(&header).map_err(io)?;
    for r in &series.records {
        let mut row = vec![r.timestamp.clone().unwrap_or_else(|| r.t.to_string())];
        row.extend(r.y.iter().map(|v| if v.is_nan() { String::new() } else { format!("{v:.6}") }));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Data(format!("write failed: {e}")))
}

/// Periods to keep: an optional weekday, a set of hours, an optional year.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub weekday: Option<Weekday>,
    pub hours: Vec<u32>,
    pub year: Option<i32>,
}

impl Schedule {
    /// Hourly periods starting 14:00 through 20:00 on one weekday of a year.
    pub fn weekday_afternoons(weekday: Weekday, year: i32) -> Self {
        Self {
            weekday: Some(weekday),
            hours: (14..=20).collect(),
            year: Some(year),
        }
    }

    pub fn matches(&self, ts: &NaiveDateTime) -> bool {
        self.weekday.is_none_or(|w| ts.weekday() == w)
            && self.hours.contains(&ts.hour())
            && self.year.is_none_or(|y| ts.year() == y)
    }

    /// Every slot of the year, when a year is set.
    pub fn slots(&self) -> Option<Vec<NaiveDateTime>> {
        let year = self.year?;
        let mut d = NaiveDate::from_ymd_opt(year, 1, 1)?;
        let mut hours = self.hours.clone();
        hours.sort_unstable();
        hours.dedup();
        let mut out = Vec::new();
        while d.year() == year {
            if self.weekday.is_none_or(|w| d.weekday() == w) {
                out.extend(hours.iter().filter_map(|h| d.and_hms_opt(*h, 0, 0)));
            }
            d = d.succ_opt()?;
        }
        Some(out)
    }
}

/// Slot accounting of a corridor build: `complete + dropped = slots`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotReport {
    pub slots: usize,
    pub complete: usize,
    pub dropped: usize,
    /// Readings outside the schedule.
    pub ignored_readings: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltCorridor {
    pub sensor_ids: Vec<String>,
    /// Segment lengths in miles, one per sensor.
    pub distances: Vec<f64>,
    pub series: ObservationSeries,
    pub report: SlotReport,
}

impl BuiltCorridor {
    /// Calibrated rates with the segment distances attached.
    pub fn model(&self) -> Result<CorridorModel> {
        calibrate_lambdas(&self.series)?.with_distances(self.distances.clone())
    }

    pub fn total_distance(&self) -> f64 {
        self.distances.iter().sum()
    }
}

fn segment_distances(sensors: &[SensorRecord], overrides: Option<&BTreeMap<String, f64>>) -> Result<Vec<f64>> {
    if let Some(map) = overrides {
        return sensors
            .iter()
            .map(|s| map.get(&s.sensor_id).copied().ok_or_else(|| Error::Data(format!("no distance for sensor {}", s.sensor_id))))
            .collect();
    }
    if sensors.len() < 2 {
        return Err(Error::Data("need at least 2 sensors to derive distances".into()));
    }
    let mut d: Vec<f64> = sensors.windows(2).map(|w| haversine_miles(w[0].lat, w[0].lon, w[1].lat, w[1].lon)).collect();
    // The last sensor has no downstream neighbour; reuse the previous length.
    d.push(*d.last().expect("at least one segment"));
    if let Some((i, _)) = d.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::Data(format!("segment at sensor {} has zero length", sensors[i].sensor_id)));
    }
    Ok(d)
}

/// Build segment travel times `60 d / v` minutes for every complete schedule
/// slot. Several readings for the same sensor and hour are averaged.
/// Any slot with a missing sensor is dropped.
pub fn build_corridor(
    sensors: &[SensorRecord],
    speeds: &[SpeedRecord],
    schedule: &Schedule,
    distance_overrides: Option<&BTreeMap<String, f64>>,
) -> Result<BuiltCorridor> {
    let sensors = validate_sensors(sensors.to_vec())?;
    let distances = segment_distances(&sensors, distance_overrides)?;
    let index: HashMap<&str, usize> = sensors.iter().enumerate().map(|(i, s)| (s.sensor_id.as_str(), i)).collect();
    let m = sensors.len();

    let mut readings: BTreeMap<NaiveDateTime, Vec<Vec<f64>>> = BTreeMap::new();
    let mut ignored = 0;
    for r in speeds {
        let j = *index
            .get(r.sensor_id.as_str())
            .ok_or_else(|| Error::Data(format!("speed record at {} names unknown sensor {}", r.timestamp, r.sensor_id)))?;
        if let Some(v) = r.speed {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Data(format!("speed {v} at {} for sensor {} must be positive", r.timestamp, r.sensor_id)));
            }
        }
        let ts = truncate_hour(r.timestamp);
        if !schedule.matches(&ts) {
            ignored += 1;
            continue;
        }
        let slot = readings.entry(ts).or_insert_with(|| vec![Vec::new(); m]);
        if let Some(v) = r.speed {
            slot[j].push(v);
        }
    }

    let slots: Vec<NaiveDateTime> = schedule.slots().unwrap_or_else(|| readings.keys().copied().collect());
    let mut records = Vec::new();
    for ts in &slots {
        let Some(per_sensor) = readings.get_mut(ts) else { continue };
        if per_sensor.iter().any(Vec::is_empty) {
            continue;
        }
        let y: Vec<f64> = per_sensor
            .iter_mut()
            .zip(&distances)
            .map(|(vals, d)| {
                vals.sort_by(f64::total_cmp);
                let v = vals.iter().sum::<f64>() / vals.len() as f64;
                60.0 * d / v
            })
            .collect();
        let mut rec = ObservationRecord::new(records.len() + 1, y);
        rec.timestamp = Some(ts.format(TIMESTAMP_FORMAT).to_string());
        records.push(rec);
    }
    let complete = records.len();
    let sensor_ids: Vec<String> = sensors.iter().map(|s| s.sensor_id.clone()).collect();
    Ok(BuiltCorridor {
        series: ObservationSeries::new(sensor_ids.clone(), records)?,
        sensor_ids,
        distances,
        report: SlotReport {
            slots: slots.len(),
            complete,
            dropped: slots.len() - complete,
            ignored_readings: ignored,
        },
    })
}

/// Read `sensors.csv`, `speeds.csv` and, when present, `distances.csv` from
/// `dir`, then build the corridor for `schedule`.
pub fn load_corridor_dir(dir: &Path, schedule: &Schedule) -> Result<BuiltCorridor> {
    let open = |name: &str| File::open(dir.join(name)).map_err(|e| Error::Data(format!("cannot open {}: {e}", dir.join(name).display())));
    let sensors = read_sensors(open("sensors.csv")?)?;
    let speeds = read_speeds(open("speeds.csv")?)?;
    let distances = if dir.join("distances.csv").exists() {
        Some(read_distances(open("distances.csv")?)?)
    } else {
        None
    };
    build_corridor(&sensors, &speeds, schedule, distances.as_ref())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedCorridor {
    pub series: ObservationSeries,
    /// `eta_1..eta_T`.
    pub eta_path: Vec<f64>,
}

/// Simulate `t_len` periods from the generative model: `eta_0 ~ Gam(a_0, b_0)`,
/// `eta_t = eta_{t-1} eps_t / gamma` with `eps_t ~ Beta(gamma a, (1 - gamma) a)`,
/// and `y_jt ~ Gam(alpha, lambda_j eta_t)`. The innovation parameters follow
/// the filter recursion `(a, b)` run on the simulated data, so filtering the
/// output from the same initial state is exactly calibrated.
pub fn simulate_corridor<R: Rng + ?Sized>(
    hyper: &HyperParams,
    model: &CorridorModel,
    t_len: usize,
    init: &GammaState,
    rng: &mut R,
) -> Result<SimulatedCorridor> {
    let m = model.num_segments();
    let ids: Vec<String> = if model.segment_ids().len() == m {
        model.segment_ids().to_vec()
    } else {
        (1..=m).map(|j| format!("seg{j}")).collect()
    };
    let (alpha, gamma) = (hyper.alpha, hyper.gamma);
    let mut eta = gamma_draw(init.a, init.b, rng);
    let mut state = *init;
    let mut eta_path = Vec::with_capacity(t_len);
    let mut records = Vec::with_capacity(t_len);
    for t in 1..=t_len {
        let eps = beta_sample(gamma * state.a, (1.0 - gamma) * state.a, rng)?;
        eta = eta * eps / gamma;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Numeric(format!("simulated environment left (0, inf) at t={t}: {eta}")));
        }
        let y: Vec<f64> = model.lambdas().iter().map(|l| gamma_draw(alpha, l * eta, rng)).collect();
        if let Some(v) = y.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Numeric(format!("simulated travel time at t={t} is {v}")));
        }
        state = GammaState {
            a: gamma * state.a + m as f64 * alpha,
            b: gamma * state.b + model.weighted_sum(&y),
        };
        eta_path.push(eta);
        records.push(ObservationRecord::new(t, y));
    }
    Ok(SimulatedCorridor {
        series: ObservationSeries::new(ids, records)?,
        eta_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    #[test]
    fn haversine_basics() {
        assert_eq!(haversine_miles(41.8, -87.6, 41.8, -87.6), 0.0);
        let deg = haversine_miles(0.0, 0.0, 0.0, 1.0);
        assert!((deg - std::f64::consts::PI * EARTH_RADIUS_MI / 180.0).abs() < 1e-9);
        assert!((deg - 69.093).abs() < 0.01);
        let (a, b) = (haversine_miles(41.0, -88.0, 41.5, -87.2), haversine_miles(41.5, -87.2, 41.0, -88.0));
        assert_eq!(a, b);
    }

    #[test]
    fn timestamps_truncate_to_hour() {
        let want = NaiveDate::from_ymd_opt(2019, 3, 6).unwrap().and_hms_opt(14, 0, 0).unwrap();
        for s in ["2019-03-06T14:37:12", "2019-03-06 14:05", "2019-03-06T14", "2019-03-06 14:59:59.5"] {
            assert_eq!(parse_timestamp(s).unwrap(), want, "{s}");
        }
        for s in ["2019-13-06T14:00", "yesterday", "", "2019-03-06T25:00", "2019-03-06T14:00+02:00"] {
            assert!(parse_timestamp(s).is_err(), "{s}");
        }
    }

    #[test]
    fn wednesday_schedule_has_364_slots() {
        let s = Schedule::weekday_afternoons(Weekday::Wed, 2019);
        assert_eq!(s.slots().unwrap().len(), 364);
    }

    fn sensors() -> Vec<SensorRecord> {
        vec![
            SensorRecord {
                sensor_id: "a".into(),
                lat: 0.0,
                lon: 0.0,
                order: 1,
            },
            SensorRecord {
                sensor_id: "b".into(),
                lat: 0.0,
                lon: 0.5 / (std::f64::consts::PI * EARTH_RADIUS_MI / 180.0),
                order: 2,
            },
        ]
    }

    fn speed(ts: &str, id: &str, v: Option<f64>) -> SpeedRecord {
        SpeedRecord {
            timestamp: parse_timestamp(ts).unwrap(),
            sensor_id: id.into(),
            speed: v,
        }
    }

    #[test]
    fn half_mile_at_thirty_mph_is_one_minute() {
        let speeds = vec![speed("2019-01-02T14:00", "a", Some(30.0)), speed("2019-01-02T14:00", "b", Some(60.0))];
        let sched = Schedule {
            weekday: Some(Weekday::Wed),
            hours: vec![14],
            year: None,
        };
        let c = build_corridor(&sensors(), &speeds, &sched, None).unwrap();
        assert!((c.distances[0] - 0.5).abs() < 1e-9 && (c.distances[1] - 0.5).abs() < 1e-9);
        assert!((c.series.records[0].y[0] - 1.0).abs() < 1e-9);
        assert!((c.series.records[0].y[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn incomplete_slots_are_dropped_and_counted() {
        let speeds = vec![
            speed("2019-01-02T14:10", "a", Some(30.0)),
            speed("2019-01-02T14:40", "a", Some(50.0)),
            speed("2019-01-02T14:00", "b", Some(60.0)),
            speed("2019-01-02T15:00", "a", Some(30.0)),
            speed("2019-01-02T15:00", "b", None),
            speed("2019-01-03T15:00", "b", Some(20.0)),
        ];
        let sched = Schedule::weekday_afternoons(Weekday::Wed, 2019);
        let c = build_corridor(&sensors(), &speeds, &sched, None).unwrap();
        assert_eq!(c.report.slots, 364);
        assert_eq!(c.report.complete, 1);
        assert_eq!(c.report.complete + c.report.dropped, c.report.slots);
        assert_eq!(c.report.ignored_readings, 1);
        // Averaged speed 40 mph over half a mile.
        assert!((c.series.records[0].y[0] - 0.75).abs() < 1e-9);

        let mut rev = speeds.clone();
        rev.reverse();
        assert_eq!(build_corridor(&sensors(), &rev, &sched, None).unwrap(), c);
    }

    #[test]
    fn bad_speed_inputs() {
        let sched = Schedule::weekday_afternoons(Weekday::Wed, 2019);
        let unknown = vec![speed("2019-01-02T14:00", "zz", Some(30.0))];
        assert!(matches!(build_corridor(&sensors(), &unknown, &sched, None), Err(Error::Data(_))));
        let zero = vec![speed("2019-01-02T14:00", "a", Some(0.0))];
        let err = build_corridor(&sensors(), &zero, &sched, None).unwrap_err();
        assert!(err.to_string().contains("sensor a"));
        let csv = "timestamp,sensor_id,speed_mph\n2019-01-02T14:00,a,0\n";
        assert!(matches!(read_speeds(csv.as_bytes()), Err(Error::Data(_))));
    }

    #[test]
    fn distance_overrides() {
        let map: BTreeMap<String, f64> = [("a".to_string(), 1.0), ("b".to_string(), 2.0)].into();
        let speeds = vec![speed("2019-01-02T14:00", "a", Some(60.0)), speed("2019-01-02T14:00", "b", Some(60.0))];
        let sched = Schedule::weekday_afternoons(Weekday::Wed, 2019);
        let c = build_corridor(&sensors(), &speeds, &sched, Some(&map)).unwrap();
        assert_eq!(c.series.records[0].y, vec![1.0, 2.0]);
        assert_eq!(c.total_distance(), 3.0);
        let partial: BTreeMap<String, f64> = [("a".to_string(), 1.0)].into();
        assert!(build_corridor(&sensors(), &speeds, &sched, Some(&partial)).is_err());
    }

    #[test]
    fn csv_readers() {
        let s = read_sensors("sensor_id,lat,lon,order\nb,41.1,-87.9,2\na,41.0,-88.0,1\n".as_bytes()).unwrap();
        assert_eq!(s[0].sensor_id, "a");
        assert!(read_sensors("sensor_id,lat,lon,order\na,41.0,-88.0,1\nb,41.1,-87.9,3\n".as_bytes()).is_err());
        assert!(read_sensors("id,lat,lon,order\na,41.0,-88.0,1\n".as_bytes()).is_err());
        assert!(read_sensors("sensor_id,lat,lon,order\na,91.0,-88.0,1\n".as_bytes()).is_err());
        let sp = read_speeds("timestamp,sensor_id,speed_mph\n2019-01-02 14:00,a,\n2019-01-02 14:00,b,55.5\n".as_bytes()).unwrap();
        assert_eq!(sp[0].speed, None);
        assert_eq!(sp[1].speed, Some(55.5));
        let d = read_distances("sensor_id,distance_mi\na,0.5\nb,0.25\n".as_bytes()).unwrap();
        assert_eq!(d["b"], 0.25);
        assert!(read_distances("sensor_id,distance_mi\na,-1\n".as_bytes()).is_err());
    }

    #[test]
    fn observations_round_trip() {
        let mut series = ObservationSeries::new(
            vec!["6030".into(), "6031".into()],
            vec![ObservationRecord::new(1, vec![1.25, 2.5]), ObservationRecord::new(2, vec![1.0 / 3.0, 4.0])],
        )
        .unwrap();
        series.records[0].timestamp = Some("2019-01-02T14:00:00".into());
        series.records[1].timestamp = Some("2019-01-02T15:00:00".into());
        let mut buf = Vec::new();
        write_observations(&series, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("timestamp,y_6030,y_6031\n2019-01-02T14:00:00,1.250000,2.500000\n"));
        let back = read_observations(buf.as_slice()).unwrap();
        assert_eq!(back.segment_ids, series.segment_ids);
        assert!((back.records[1].y[0] - 0.333333).abs() < 1e-12);
        assert!(read_observations("time,y_a\n".as_bytes()).is_err());
        assert!(read_observations("timestamp,a\n".as_bytes()).is_err());
        let idx = read_observations("timestamp,y_a\n1,2.0\n2,3.0\n".as_bytes()).unwrap();
        assert_eq!(idx.records[1].timestamp, None);
        assert_eq!(idx.records[1].y, vec![3.0]);

        let gap = read_observations("timestamp,y_a,y_b\n1,2.0,\n".as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_observations(&gap, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "timestamp,y_a,y_b\n1,2.000000,\n");
        assert!(read_observations(buf.as_slice()).unwrap().records[0].y[1].is_nan());
    }

    #[test]
    fn near_unit_discount_keeps_environment_flat() {
        let hyper = HyperParams::new(1.0, 0.999).unwrap();
        let model = CorridorModel::homogeneous(4).unwrap();
        let init = GammaState::new(1e4, 1e4).unwrap();
        let sim = simulate_corridor(&hyper, &model, 200, &init, &mut seeded_rng(4)).unwrap();
        let n = sim.eta_path.len() as f64;
        let mean = sim.eta_path.iter().sum::<f64>() / n;
        let sd = (sim.eta_path.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(sd / mean < 0.05, "relative sd {}", sd / mean);
    }

    #[test]
    fn simulated_scaled_travel_times_average_alpha() {
        let hyper = HyperParams::new(2.0, 0.8).unwrap();
        let model = CorridorModel::from_lambdas(vec![0.5, 1.0, 1.5]).unwrap();
        let init = GammaState::new(2.5, 2.5).unwrap();
        let sim = simulate_corridor(&hyper, &model, 4000, &init, &mut seeded_rng(6)).unwrap();
        let mut acc = 0.0;
        for (r, e) in sim.series.records.iter().zip(&sim.eta_path) {
            for (y, l) in r.y.iter().zip(model.lambdas()) {
                acc += y * l * e;
            }
        }
        let mean = acc / (3.0 * 4000.0);
        assert!((mean - 2.0).abs() < 4.0 * (2.0f64 / 12_000.0).sqrt());
    }
}
