//! Output files: JSON documents stamped with the config hash, and PGM rasters.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::cellset::CellSet;
use crate::error::{Error, Result};
use crate::space::Grid;

/// Writes `payload` as pretty JSON with a top-level `config_hash` field.
/// The payload must serialize to an object.
pub fn write_json<T: Serialize>(path: &Path, config_hash: &str, payload: &T) -> Result<()> {
    let mut v = serde_json::to_value(payload)?;
    let Value::Object(map) = &mut v else {
        return Err(Error::Json(serde::ser::Error::custom("payload must be a JSON object")));
    };
    map.insert("config_hash".into(), Value::String(config_hash.into()));
    let mut text = serde_json::to_string_pretty(&v)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Plain PGM (P2) raster: 255 for member cells, 0 otherwise; the top row
/// holds the largest second coordinate. 1-D grids give a single row.
/// Returns `None` for grids of dimension above 2.
pub fn pgm_string(set: &CellSet, config_hash: &str) -> Option<String> {
    let grid = set.grid();
    let (w, h) = match grid.subdivisions() {
        [w] => (*w, 1),
        [w, h] => (*w, *h),
        _ => return None,
    };
    let mut s = String::with_capacity(w * h * 4 + 64);
    let _ = writeln!(s, "P2\n# config_hash {config_hash}\n{w} {h}\n255");
    for row in (0..h).rev() {
        let line: Vec<&str> =
            (0..w).map(|col| if set.contains(row * w + col) { "255" } else { "0" }).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    Some(s)
}

/// Writes the raster if the grid has at most two axes; reports whether a
/// file was written.
pub fn write_pgm(path: &Path, set: &CellSet, config_hash: &str) -> Result<bool> {
    match pgm_string(set, config_hash) {
        Some(s) => {
            fs::write(path, s)?;
            Ok(true)
        }
        None => Ok(false),
    }
}

/// Inverse of [`pgm_string`] on the given grid (any nonzero value is a member).
pub fn parse_pgm(text: &str, grid: &Arc<Grid>) -> Result<CellSet> {
    let bad = |m: &str| Error::InvalidGrid(format!("PGM: {m}"));
    let mut tokens = text.lines().filter(|l| !l.starts_with('#')).flat_map(str::split_whitespace);
    if tokens.next() != Some("P2") {
        return Err(bad("missing P2 magic"));
    }
    let mut num = || -> Result<usize> {
        tokens.next().ok_or_else(|| bad("truncated"))?.parse().map_err(|_| bad("not a number"))
    };
    let (w, h, _max) = (num()?, num()?, num()?);
    let expect = match grid.subdivisions() {
        [a] => (*a, 1),
        [a, b] => (*a, *b),
        _ => return Err(bad("grid has more than two axes")),
    };
    if (w, h) != expect {
        return Err(bad("size does not match the grid"));
    }
    let mut set = CellSet::empty(grid);
    for row in (0..h).rev() {
        for col in 0..w {
            if num()? != 0 {
                set.insert(row * w + col);
            }
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Window;

    #[test]
    fn pgm_orientation_and_round_trip() {
        let grid = Arc::new(Grid::new(Window::new(vec![0.0, 0.0], vec![3.0, 2.0]).unwrap(), vec![3, 2]).unwrap());
        // cell (x=2, y=1) is top right
        let set = CellSet::from_cells(&grid, [grid.flat(&[2, 1]), grid.flat(&[0, 0])]);
        let s = pgm_string(&set, "abc").unwrap();
        assert_eq!(s, "P2\n# config_hash abc\n3 2\n255\n0 0 255\n255 0 0\n");
        assert_eq!(parse_pgm(&s, &grid).unwrap(), set);
    }

    #[test]
    fn one_dimensional_raster_is_one_row() {
        let grid = Arc::new(Grid::uniform(Window::new(vec![0.0], vec![1.0]).unwrap(), 4).unwrap());
        let set = CellSet::from_cells(&grid, [1]);
        assert_eq!(pgm_string(&set, "h").unwrap().lines().last(), Some("0 255 0 0"));
    }

    #[test]
    fn json_carries_hash() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        write_json(&p, "deadbeef", &serde_json::json!({"a": 1})).unwrap();
        let v: Value = read_json(&p).unwrap();
        assert_eq!(v["config_hash"], "deadbeef");
        assert_eq!(v["a"], 1);
        assert!(write_json(&p, "h", &3).is_err());
    }
}
