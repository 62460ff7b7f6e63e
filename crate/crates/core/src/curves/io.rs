use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{DailyCurve, Dataset, Provenance, SLOTS, SLOT_HOURS};
use crate::error::{Error, Result};

/// One smart-meter record: energy in kWh over a 30-minute slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub meter_id: String,
    pub day: String,
    pub slot: usize,
    pub kwh: f64,
}

fn is_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return false;
    }
    let digits = |r: std::ops::Range<usize>| b[r].iter().all(u8::is_ascii_digit);
    if !(digits(0..4) && digits(5..7) && digits(8..10)) {
        return false;
    }
    let month: u32 = s[5..7].parse().unwrap_or(0);
    let day: u32 = s[8..10].parse().unwrap_or(0);
    (1..=12).contains(&month) && (1..=31).contains(&day)
}

/// Sums every meter's mean power per slot into one community curve per day.
///
/// Each (day, slot) must carry exactly `meter_count` readings. Days come out
/// in ISO-date order.
pub fn ingest_readings(rows: &[Reading], meter_count: usize) -> Result<Dataset> {
    if meter_count == 0 {
        return Err(Error::InvalidConfig("meter_count must be positive".into()));
    }
    let mut days: BTreeMap<&str, ([f64; SLOTS], [usize; SLOTS])> = BTreeMap::new();
    for r in rows {
        if !is_iso_date(&r.day) {
            return Err(Error::InvalidReading(format!("day {:?} is not an ISO date", r.day)));
        }
        if !(1..=SLOTS).contains(&r.slot) {
            return Err(Error::InvalidReading(format!(
                "meter {} day {}: slot {} outside 1..={SLOTS}",
                r.meter_id, r.day, r.slot
            )));
        }
        if !r.kwh.is_finite() || r.kwh < 0.0 {
            return Err(Error::InvalidReading(format!(
                "meter {} day {} slot {}: kwh {}",
                r.meter_id, r.day, r.slot, r.kwh
            )));
        }
        let (sum, count) = days.entry(r.day.as_str()).or_insert(([0.0; SLOTS], [0; SLOTS]));
        sum[r.slot - 1] += r.kwh / SLOT_HOURS;
        count[r.slot - 1] += 1;
    }
    let mut curves = Vec::with_capacity(days.len());
    for (day, (sum, count)) in days {
        for (i, &c) in count.iter().enumerate() {
            if c < meter_count {
                return Err(Error::IncompleteDay { day: day.to_string(), slot: i + 1 });
            }
            if c > meter_count {
                return Err(Error::InvalidReading(format!(
                    "day {day} slot {}: {c} readings for {meter_count} meters",
                    i + 1
                )));
            }
        }
        curves.push(DailyCurve::new(day, sum)?);
    }
    if curves.is_empty() {
        return Err(Error::InsufficientData("no readings".into()));
    }
    Ok(Dataset::new(curves, Provenance::Original))
}

/// Parses a reading CSV (`meter_id,day,slot,kwh`).
pub fn read_readings(input: impl Read) -> Result<Vec<Reading>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["meter_id", "day", "slot", "kwh"] {
        return Err(Error::Parse(format!(
            "reading header must be meter_id,day,slot,kwh; got {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// Writes a curve CSV (`day,v1,...,v48`). Values use the shortest decimal
/// form that parses back to the same `f64`.
pub fn write_curves(out: impl Write, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["day".to_string()];
    header.extend((1..=SLOTS).map(|s| format!("v{s}")));
    w.write_record(&header)?;
    for c in &data.curves {
        let mut row = Vec::with_capacity(SLOTS + 1);
        row.push(c.date_tag().to_string());
        row.extend(c.values().iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curves(input: impl Read, provenance: Provenance) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let valid = headers.len() == SLOTS + 1
        && &headers[0] == "day"
        && headers.iter().skip(1).enumerate().all(|(i, h)| h == format!("v{}", i + 1));
    if !valid {
        return Err(Error::Parse("curve header must be day,v1,...,v48".into()));
    }
    let mut curves = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut values = [0.0; SLOTS];
        for (i, v) in values.iter_mut().enumerate() {
            *v = rec[i + 1].trim().parse().map_err(|_| {
                Error::Parse(format!("row {}: bad value {:?} in v{}", line + 2, &rec[i + 1], i + 1))
            })?;
        }
        curves.push(DailyCurve::new(&rec[0], values)?);
    }
    Ok(Dataset::new(curves, provenance))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_day(meters: &[&str], day: &str, kwh: f64) -> Vec<Reading> {
        let mut rows = Vec::new();
        for m in meters {
            for slot in 1..=SLOTS {
                rows.push(Reading { meter_id: m.to_string(), day: day.into(), slot, kwh });
            }
        }
        rows
    }

    #[test]
    fn two_meters_sum_to_mean_power() {
        let mut rows = full_day(&["a", "b"], "2010-01-01", 0.0);
        rows[0].kwh = 0.5; // meter a slot 1
        rows[SLOTS].kwh = 1.0; // meter b slot 1
        let d = ingest_readings(&rows, 2).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.curves[0].slot(1), 3.0);
        assert!(d.curves[0].values()[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_slot_names_day_and_slot() {
        let mut rows = full_day(&["a"], "2010-01-02", 0.2);
        rows.retain(|r| r.slot != 17);
        match ingest_readings(&rows, 1) {
            Err(Error::IncompleteDay { day, slot }) => {
                assert_eq!(day, "2010-01-02");
                assert_eq!(slot, 17);
            }
            other => panic!("unexpected {other:?}"),
        }
        // a meter missing from one slot is also an incomplete day
        let mut rows = full_day(&["a", "b"], "2010-01-02", 0.2);
        rows.remove(SLOTS + 4);
        assert!(matches!(ingest_readings(&rows, 2), Err(Error::IncompleteDay { slot: 5, .. })));
    }

    #[test]
    fn negative_and_malformed_readings() {
        let mut rows = full_day(&["a"], "2010-01-01", 0.1);
        rows[3].kwh = -0.01;
        assert!(matches!(ingest_readings(&rows, 1), Err(Error::InvalidReading(_))));
        let mut rows = full_day(&["a"], "2010-01-01", 0.1);
        rows[3].slot = 49;
        assert!(matches!(ingest_readings(&rows, 1), Err(Error::InvalidReading(_))));
        let rows = full_day(&["a"], "01/01/2010", 0.1);
        assert!(matches!(ingest_readings(&rows, 1), Err(Error::InvalidReading(_))));
    }

    #[test]
    fn curve_csv_round_trip_is_bit_exact() {
        let mut values = [0.0; SLOTS];
        for (i, v) in values.iter_mut().enumerate() {
            *v = (i as f64 + 0.1).powf(1.7) / 3.0;
        }
        let d = Dataset::new(vec![DailyCurve::new("2010-05-01", values).unwrap()], Provenance::Original);
        let mut buf = Vec::new();
        write_curves(&mut buf, &d).unwrap();
        let back = read_curves(buf.as_slice(), Provenance::Original).unwrap();
        assert_eq!(back, d);
        let mut again = Vec::new();
        write_curves(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn reading_csv_header_checked() {
        let good = "meter_id,day,slot,kwh\nm1,2010-01-01,1,0.25\n";
        let rows = read_readings(good.as_bytes()).unwrap();
        assert_eq!(rows[0].kwh, 0.25);
        assert!(read_readings("meter,day,slot,kwh\n".as_bytes()).is_err());
    }
}
