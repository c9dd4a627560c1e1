//! CSV streams: pose tracks, IMU samples, GNSS fixes, heading/pitch
//! observations and M3C2 distance lists.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::IoError;
use crate::geometry::{Pose, PoseTrack};
use crate::sim::{GnssFix, HeadingPitchObs, ImuSample};

#[derive(Serialize, Deserialize)]
struct TrackRow {
    t: f64,
    px: f64,
    py: f64,
    pz: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
}

#[derive(Serialize, Deserialize)]
struct ImuRow {
    t: f64,
    wx: f64,
    wy: f64,
    wz: f64,
    ax: f64,
    ay: f64,
    az: f64,
}

#[derive(Serialize, Deserialize)]
struct GnssRow {
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    sx: f64,
    sy: f64,
    sz: f64,
}

#[derive(Serialize, Deserialize)]
struct HeadingRow {
    t: f64,
    heading: f64,
    pitch: f64,
    heading_sigma: f64,
    pitch_sigma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub core_x: f64,
    pub core_y: f64,
    pub core_z: f64,
    pub dist_m: f64,
}

fn write_rows<T: Serialize>(path: impl AsRef<Path>, rows: impl IntoIterator<Item = T>) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, IoError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    r.deserialize().map(|row| row.map_err(IoError::from)).collect()
}

pub fn write_track(path: impl AsRef<Path>, track: &PoseTrack) -> Result<(), IoError> {
    write_rows(
        path,
        track.entries().map(|(t, p)| {
            let [qw, qx, qy, qz] = p.wxyz();
            TrackRow {
                t,
                px: p.position.x,
                py: p.position.y,
                pz: p.position.z,
                qw,
                qx,
                qy,
                qz,
            }
        }),
    )
}

pub fn read_track(path: impl AsRef<Path>, frame: &str) -> Result<PoseTrack, IoError> {
    let rows: Vec<TrackRow> = read_rows(path)?;
    let entries = rows
        .into_iter()
        .map(|r| (r.t, Pose::from_wxyz(Vector3::new(r.px, r.py, r.pz), [r.qw, r.qx, r.qy, r.qz])))
        .collect();
    PoseTrack::from_entries(entries, frame).map_err(|e| IoError::Format(e.to_string()))
}

pub fn write_imu(path: impl AsRef<Path>, samples: &[ImuSample]) -> Result<(), IoError> {
    write_rows(
        path,
        samples.iter().map(|s| ImuRow {
            t: s.timestamp,
            wx: s.angular_rate.x,
            wy: s.angular_rate.y,
            wz: s.angular_rate.z,
            ax: s.acceleration.x,
            ay: s.acceleration.y,
            az: s.acceleration.z,
        }),
    )
}

pub fn read_imu(path: impl AsRef<Path>) -> Result<Vec<ImuSample>, IoError> {
    Ok(read_rows::<ImuRow>(path)?
        .into_iter()
        .map(|r| ImuSample {
            timestamp: r.t,
            angular_rate: Vector3::new(r.wx, r.wy, r.wz),
            acceleration: Vector3::new(r.ax, r.ay, r.az),
        })
        .collect())
}

pub fn write_gnss(path: impl AsRef<Path>, fixes: &[GnssFix]) -> Result<(), IoError> {
    write_rows(
        path,
        fixes.iter().map(|f| GnssRow {
            t: f.timestamp,
            x: f.position.x,
            y: f.position.y,
            z: f.position.z,
            sx: f.sigma.x,
            sy: f.sigma.y,
            sz: f.sigma.z,
        }),
    )
}

pub fn read_gnss(path: impl AsRef<Path>) -> Result<Vec<GnssFix>, IoError> {
    let fixes: Vec<GnssFix> = read_rows::<GnssRow>(path)?
        .into_iter()
        .map(|r| GnssFix {
            timestamp: r.t,
            position: Vector3::new(r.x, r.y, r.z),
            sigma: Vector3::new(r.sx, r.sy, r.sz),
        })
        .collect();
    if fixes.iter().any(|f| f.sigma.iter().any(|s| !(*s > 0.0))) {
        return Err(IoError::Format("GNSS sigmas must be positive".into()));
    }
    Ok(fixes)
}

pub fn write_heading_pitch(path: impl AsRef<Path>, obs: &[HeadingPitchObs]) -> Result<(), IoError> {
    write_rows(
        path,
        obs.iter().map(|o| HeadingRow {
            t: o.timestamp,
            heading: o.heading,
            pitch: o.pitch,
            heading_sigma: o.heading_sigma,
            pitch_sigma: o.pitch_sigma,
        }),
    )
}

pub fn read_heading_pitch(path: impl AsRef<Path>) -> Result<Vec<HeadingPitchObs>, IoError> {
    let obs: Vec<HeadingPitchObs> = read_rows::<HeadingRow>(path)?
        .into_iter()
        .map(|r| HeadingPitchObs {
            timestamp: r.t,
            heading: r.heading,
            pitch: r.pitch,
            heading_sigma: r.heading_sigma,
            pitch_sigma: r.pitch_sigma,
        })
        .collect();
    if obs.iter().any(|o| !(o.heading_sigma > 0.0 && o.pitch_sigma > 0.0)) {
        return Err(IoError::Format("heading/pitch sigmas must be positive".into()));
    }
    Ok(obs)
}

pub fn write_distances(path: impl AsRef<Path>, rows: &[DistanceRow]) -> Result<(), IoError> {
    write_rows(path, rows.iter())
}

pub fn read_distances(path: impl AsRef<Path>) -> Result<Vec<DistanceRow>, IoError> {
    read_rows(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::so3;

    #[test]
    fn track_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("track.csv");
        let poses: Vec<Pose> = (0..5)
            .map(|i| Pose::new(Vector3::new(i as f64 * 0.1, 1.0 / 3.0, 1e6), so3::from_yaw_pitch_roll(0.1 * i as f64, 0.02, -0.01)))
            .collect();
        let track = PoseTrack::new((0..5).map(|i| 1.7e9 + i as f64 * 0.01).collect(), poses, "enu").unwrap();
        write_track(&path, &track).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,px,py,pz,qw,qx,qy,qz\n"));
        let back = read_track(&path, "enu").unwrap();
        assert_eq!(back.times(), track.times());
        for (a, b) in back.poses().iter().zip(track.poses()) {
            assert_eq!(a.position, b.position);
            assert!(so3::angle_between(&a.rotation, &b.rotation) < 1e-15);
        }
    }

    #[test]
    fn streams_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let imu = vec![ImuSample {
            timestamp: 0.01,
            angular_rate: Vector3::new(0.1, -0.2, 0.3),
            acceleration: Vector3::new(0.0, 0.5, 9.81),
        }];
        write_imu(dir.path().join("imu.csv"), &imu).unwrap();
        assert_eq!(read_imu(dir.path().join("imu.csv")).unwrap(), imu);
        let gnss = vec![GnssFix {
            timestamp: 0.1,
            position: Vector3::new(1.0, 2.0, 3.0),
            sigma: Vector3::new(0.01, 0.01, 0.02),
        }];
        write_gnss(dir.path().join("gnss.csv"), &gnss).unwrap();
        assert_eq!(read_gnss(dir.path().join("gnss.csv")).unwrap(), gnss);
        let rows = vec![DistanceRow { core_x: 1.0, core_y: 2.0, core_z: 0.5, dist_m: -1e-4 }];
        write_distances(dir.path().join("d.csv"), &rows).unwrap();
        let text = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
        assert!(text.starts_with("core_x,core_y,core_z,dist_m\n"));
        assert_eq!(read_distances(dir.path().join("d.csv")).unwrap(), rows);
    }

    #[test]
    fn non_positive_sigma_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hp.csv");
        std::fs::write(&path, "t,heading,pitch,heading_sigma,pitch_sigma\n0,0,0,0,0.1\n").unwrap();
        assert!(read_heading_pitch(&path).is_err());
    }
}
