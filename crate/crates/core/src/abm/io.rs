//! Per-run ABM artifacts: `agents_<run>.csv`, `blocks_<run>.csv`, `scenario_<run>.txt`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::scenario::ScenarioParams;
use super::{AgentRecord, AgentTrajectory, BlockRecord, Location, YearSnapshot};

pub const OUTMIGRATED_TAG: &str = "out";

pub fn agents_path(dir: &Path, run: usize) -> PathBuf {
    dir.join(format!("agents_{run}.csv"))
}

pub fn blocks_path(dir: &Path, run: usize) -> PathBuf {
    dir.join(format!("blocks_{run}.csv"))
}

pub fn scenario_path(dir: &Path, run: usize) -> PathBuf {
    dir.join(format!("scenario_{run}.txt"))
}

pub fn write_run(dir: &Path, run: usize, traj: &AgentTrajectory) -> Result<()> {
    let mut agents = csv::Writer::from_path(agents_path(dir, run))?;
    agents.write_record(["year", "agent_id", "income", "location"])?;
    for snap in &traj.snapshots {
        for a in &snap.agents {
            let loc = match a.location {
                Location::Housed(bg) => bg.to_string(),
                Location::Outmigrated => OUTMIGRATED_TAG.to_string(),
            };
            agents.write_record([snap.year.to_string(), a.id.to_string(), a.income.to_string(), loc])?;
        }
    }
    agents.flush()?;

    let mut blocks = csv::Writer::from_path(blocks_path(dir, run))?;
    blocks.write_record(["year", "bg_id", "distance_d", "supply", "price", "occupied", "flood_prone"])?;
    for snap in &traj.snapshots {
        for b in &snap.blocks {
            blocks.write_record([
                snap.year.to_string(),
                b.id.to_string(),
                b.distance.to_string(),
                b.supply.to_string(),
                b.price.to_string(),
                b.occupied.to_string(),
                u8::from(b.flood_prone).to_string(),
            ])?;
        }
    }
    blocks.flush()?;

    fs::write(scenario_path(dir, run), traj.params.to_text())?;
    Ok(())
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingFile(path.to_path_buf()))
    }
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize, path: &Path, line: usize, name: &str) -> Result<T> {
    rec.get(k)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::parse(path, line, format!("bad or missing {name}")))
}

fn line_of(rec: &csv::StringRecord, fallback: usize) -> usize {
    rec.position().map_or(fallback, |p| p.line() as usize)
}

pub fn read_run(dir: &Path, run: usize) -> Result<AgentTrajectory> {
    let (ap, bp, sp) = (agents_path(dir, run), blocks_path(dir, run), scenario_path(dir, run));
    for p in [&ap, &bp, &sp] {
        require(p)?;
    }
    let params = ScenarioParams::from_text(&fs::read_to_string(&sp)?, &sp)?;

    let mut snapshots: Vec<YearSnapshot> = Vec::new();
    let snapshot_for = |year: usize, path: &Path, line: usize, snapshots: &mut Vec<YearSnapshot>| -> Result<usize> {
        if year == snapshots.len() {
            snapshots.push(YearSnapshot {
                year,
                agents: Vec::new(),
                blocks: Vec::new(),
                created: 0,
                outmigrated: 0,
            });
        } else if year + 1 != snapshots.len() {
            return Err(Error::parse(path, line, format!("year {year} out of order")));
        }
        Ok(year)
    };

    let mut reader = csv::Reader::from_path(&bp)?;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = line_of(&rec, i + 2);
        let year: usize = field(&rec, 0, &bp, line, "year")?;
        let y = snapshot_for(year, &bp, line, &mut snapshots)?;
        let flood: u8 = field(&rec, 6, &bp, line, "flood_prone")?;
        snapshots[y].blocks.push(BlockRecord {
            id: field(&rec, 1, &bp, line, "bg_id")?,
            distance: field(&rec, 2, &bp, line, "distance_d")?,
            supply: field(&rec, 3, &bp, line, "supply")?,
            price: field(&rec, 4, &bp, line, "price")?,
            occupied: field(&rec, 5, &bp, line, "occupied")?,
            flood_prone: flood == 1,
        });
    }

    let mut reader = csv::Reader::from_path(&ap)?;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = line_of(&rec, i + 2);
        let year: usize = field(&rec, 0, &ap, line, "year")?;
        let snap = snapshots
            .get_mut(year)
            .ok_or_else(|| Error::parse(&ap, line, format!("year {year} has no block rows")))?;
        let location = match rec.get(3).map(str::trim) {
            Some(OUTMIGRATED_TAG) => Location::Outmigrated,
            Some(s) => Location::Housed(
                s.parse()
                    .map_err(|_| Error::parse(&ap, line, format!("bad location {s:?}")))?,
            ),
            None => return Err(Error::parse(&ap, line, "missing location")),
        };
        snap.agents.push(AgentRecord {
            id: field(&rec, 1, &ap, line, "agent_id")?,
            income: field(&rec, 2, &ap, line, "income")?,
            location,
        });
    }

    for y in 1..snapshots.len() {
        let (prev, cur) = snapshots.split_at_mut(y);
        let prev = &prev[y - 1];
        let cur = &mut cur[0];
        cur.created = cur.agents.len().saturating_sub(prev.agents.len());
        let out = |s: &YearSnapshot| s.agents.iter().filter(|a| a.location == Location::Outmigrated).count();
        cur.outmigrated = out(cur).saturating_sub(out(prev));
    }
    Ok(AgentTrajectory { params, snapshots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abm::{run_simulation, sample_scenario, AbmConfig};

    #[test]
    fn run_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let traj = run_simulation(&sample_scenario(4, 1), 6, 25, &AbmConfig::default()).unwrap();
        write_run(dir.path(), 1, &traj).unwrap();
        let back = read_run(dir.path(), 1).unwrap();
        assert_eq!(back, traj);
    }

    #[test]
    fn missing_files_are_named() {
        let dir = tempfile::tempdir().unwrap();
        match read_run(dir.path(), 3) {
            Err(Error::MissingFile(p)) => assert!(p.ends_with("agents_3.csv")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
