//! Keyframe logs, mesh files and statistics streams.
//!
//! Log grammar, one record per line, whitespace separated, meters:
//!
//! ```text
//! K <index>
//! C <cam_id> <x> <y> <z> [qw qx qy qz fx fy cx cy]
//! P <pt_id> <x> <y> <z>      new point
//! M <pt_id> <x> <y> <z>      moved point
//! R <pt_id>                  removed point
//! O <cam_id> <pt_id>         observation
//! # comment
//! ```
//!
//! Every keyframe starts with `K` and carries exactly one `C`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Serialize};
use thiserror::Error;

use crate::delaunay::PointId;
use crate::geom::Point;
use crate::mesh::TriangleMesh;
use crate::scheduler::CameraId;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown {kind} id {id}")]
    UnknownId { line: usize, kind: &'static str, id: u64 },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Orientation (unit quaternion, world from camera) and pinhole intrinsics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub q: [f64; 4],
    pub intrinsics: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub id: CameraId,
    pub center: Point,
    pub pose: Option<Pose>,
}

/// One keyframe's worth of SLAM output.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyframeBatch {
    pub index: u64,
    pub camera: Camera,
    pub new_points: Vec<(PointId, Point)>,
    pub moved_points: Vec<(PointId, Point)>,
    pub removed_points: Vec<PointId>,
    pub observations: Vec<(CameraId, PointId)>,
}

impl KeyframeBatch {
    pub fn new(index: u64, camera: Camera) -> Self {
        KeyframeBatch {
            index,
            camera,
            new_points: Vec::new(),
            moved_points: Vec::new(),
            removed_points: Vec::new(),
            observations: Vec::new(),
        }
    }
}

/// Streams keyframes out of a log, validating ids as it goes.
pub struct LogReader<R> {
    lines: std::iter::Enumerate<io::Lines<R>>,
    pending: Option<(usize, String)>,
    last_index: Option<u64>,
    cameras: HashSet<CameraId>,
    points: HashSet<PointId>,
}

impl<R: BufRead> LogReader<R> {
    pub fn new(reader: R) -> Self {
        LogReader {
            lines: reader.lines().enumerate(),
            pending: None,
            last_index: None,
            cameras: HashSet::new(),
            points: HashSet::new(),
        }
    }

    fn next_line(&mut self) -> Option<Result<(usize, String), IoError>> {
        if let Some(p) = self.pending.take() {
            return Some(Ok(p));
        }
        loop {
            let (i, line) = self.lines.next()?;
            let line = match line {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Some(Ok((i + 1, t.to_string())));
        }
    }

    fn read_batch(&mut self) -> Option<Result<KeyframeBatch, IoError>> {
        let (ln, first) = match self.next_line()? {
            Ok(x) => x,
            Err(e) => return Some(Err(e)),
        };
        Some(self.parse_batch(ln, &first))
    }

    fn parse_batch(&mut self, ln: usize, first: &str) -> Result<KeyframeBatch, IoError> {
        let f: Vec<&str> = first.split_whitespace().collect();
        if f[0] != "K" {
            return Err(perr(ln, format!("expected K record, found {:?}", f[0])));
        }
        expect_len(ln, &f, 2, 2)?;
        let index: u64 = num(ln, f[1])?;
        if let Some(last) = self.last_index {
            if index <= last {
                return Err(perr(ln, format!("keyframe index {index} does not follow {last}")));
            }
        }
        self.last_index = Some(index);

        let mut camera: Option<Camera> = None;
        let mut batch_new = Vec::new();
        let mut moved = Vec::new();
        let mut removed = Vec::new();
        let mut obs = Vec::new();
        while let Some(next) = self.next_line() {
            let (ln, line) = next?;
            let f: Vec<&str> = line.split_whitespace().collect();
            match f[0] {
                "K" => {
                    self.pending = Some((ln, line));
                    break;
                }
                "C" => {
                    if camera.is_some() {
                        return Err(perr(ln, "second camera in keyframe".into()));
                    }
                    if f.len() != 5 && f.len() != 13 {
                        return Err(perr(ln, format!("C takes 4 or 12 fields, got {}", f.len() - 1)));
                    }
                    let id: CameraId = num(ln, f[1])?;
                    let center = point(ln, &f[2..5])?;
                    let pose = if f.len() == 13 {
                        let v: Vec<f64> = f[5..13].iter().map(|s| num(ln, s)).collect::<Result<_, _>>()?;
                        Some(Pose {
                            q: [v[0], v[1], v[2], v[3]],
                            intrinsics: [v[4], v[5], v[6], v[7]],
                        })
                    } else {
                        None
                    };
                    self.cameras.insert(id);
                    camera = Some(Camera { id, center, pose });
                }
                "P" => {
                    expect_len(ln, &f, 5, 5)?;
                    let id: PointId = num(ln, f[1])?;
                    if !self.points.insert(id) {
                        return Err(perr(ln, format!("point {id} already exists")));
                    }
                    batch_new.push((id, point(ln, &f[2..5])?));
                }
                "M" => {
                    expect_len(ln, &f, 5, 5)?;
                    let id: PointId = num(ln, f[1])?;
                    self.known_point(ln, id)?;
                    moved.push((id, point(ln, &f[2..5])?));
                }
                "R" => {
                    expect_len(ln, &f, 2, 2)?;
                    let id: PointId = num(ln, f[1])?;
                    self.known_point(ln, id)?;
                    self.points.remove(&id);
                    removed.push(id);
                }
                "O" => {
                    expect_len(ln, &f, 3, 3)?;
                    let cam: CameraId = num(ln, f[1])?;
                    let pt: PointId = num(ln, f[2])?;
                    if !self.cameras.contains(&cam) {
                        return Err(IoError::UnknownId {
                            line: ln,
                            kind: "camera",
                            id: cam as u64,
                        });
                    }
                    self.known_point(ln, pt)?;
                    obs.push((cam, pt));
                }
                other => return Err(perr(ln, format!("unknown record {other:?}"))),
            }
        }
        let camera = camera.ok_or_else(|| perr(ln, format!("keyframe {index} has no camera")))?;
        Ok(KeyframeBatch {
            index,
            camera,
            new_points: batch_new,
            moved_points: moved,
            removed_points: removed,
            observations: obs,
        })
    }

    fn known_point(&self, ln: usize, id: PointId) -> Result<(), IoError> {
        if self.points.contains(&id) {
            Ok(())
        } else {
            Err(IoError::UnknownId {
                line: ln,
                kind: "point",
                id,
            })
        }
    }
}

impl<R: BufRead> Iterator for LogReader<R> {
    type Item = Result<KeyframeBatch, IoError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.read_batch()
    }
}

fn perr(line: usize, msg: String) -> IoError {
    IoError::Parse { line, msg }
}

fn expect_len(ln: usize, f: &[&str], lo: usize, hi: usize) -> Result<(), IoError> {
    if f.len() < lo || f.len() > hi {
        return Err(perr(ln, format!("{} record has {} fields", f[0], f.len() - 1)));
    }
    Ok(())
}

fn num<T: std::str::FromStr>(ln: usize, s: &str) -> Result<T, IoError> {
    s.parse().map_err(|_| perr(ln, format!("bad number {s:?}")))
}

fn point(ln: usize, f: &[&str]) -> Result<Point, IoError> {
    let p = Point::new(num(ln, f[0])?, num(ln, f[1])?, num(ln, f[2])?);
    if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
        return Err(perr(ln, "non-finite coordinate".into()));
    }
    Ok(p)
}

pub fn open_log(path: &Path) -> Result<LogReader<BufReader<File>>, IoError> {
    Ok(LogReader::new(BufReader::new(File::open(path)?)))
}

pub fn read_log(path: &Path) -> Result<Vec<KeyframeBatch>, IoError> {
    open_log(path)?.collect()
}

pub fn parse_log(text: &str) -> Result<Vec<KeyframeBatch>, IoError> {
    LogReader::new(text.as_bytes()).collect()
}

/// Formats a log. Floats use the shortest representation that reads back
/// to the same value.
pub fn format_log(batches: &[KeyframeBatch]) -> String {
    let mut s = String::from("# carvemesh keyframe log v1, meters\n");
    for b in batches {
        let _ = writeln!(s, "K {}", b.index);
        let c = &b.camera;
        let _ = write!(s, "C {} {} {} {}", c.id, c.center.x, c.center.y, c.center.z);
        if let Some(p) = &c.pose {
            for v in p.q.iter().chain(p.intrinsics.iter()) {
                let _ = write!(s, " {v}");
            }
        }
        s.push('\n');
        for (id, p) in &b.new_points {
            let _ = writeln!(s, "P {id} {} {} {}", p.x, p.y, p.z);
        }
        for (id, p) in &b.moved_points {
            let _ = writeln!(s, "M {id} {} {} {}", p.x, p.y, p.z);
        }
        for id in &b.removed_points {
            let _ = writeln!(s, "R {id}");
        }
        for (c, p) in &b.observations {
            let _ = writeln!(s, "O {c} {p}");
        }
    }
    s
}

pub fn write_log(batches: &[KeyframeBatch], path: &Path) -> Result<(), IoError> {
    std::fs::write(path, format_log(batches))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Ply,
    Off,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "ply" => Some(MeshFormat::Ply),
            "off" => Some(MeshFormat::Off),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            MeshFormat::Ply => "ply",
            MeshFormat::Off => "off",
        }
    }
}

pub fn write_mesh_to(mesh: &TriangleMesh, w: &mut impl Write, format: MeshFormat) -> io::Result<()> {
    match format {
        MeshFormat::Ply => {
            writeln!(w, "ply")?;
            writeln!(w, "format ascii 1.0")?;
            writeln!(w, "element vertex {}", mesh.vertices.len())?;
            writeln!(w, "property double x")?;
            writeln!(w, "property double y")?;
            writeln!(w, "property double z")?;
            writeln!(w, "element face {}", mesh.triangles.len())?;
            writeln!(w, "property list uchar int vertex_indices")?;
            writeln!(w, "end_header")?;
            for p in &mesh.vertices {
                writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
            }
            for t in &mesh.triangles {
                writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
            }
        }
        MeshFormat::Off => {
            writeln!(w, "OFF")?;
            writeln!(w, "{} {} 0", mesh.vertices.len(), mesh.triangles.len())?;
            for p in &mesh.vertices {
                writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
            }
            for t in &mesh.triangles {
                writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
            }
        }
    }
    Ok(())
}

pub fn write_mesh(mesh: &TriangleMesh, path: &Path, format: MeshFormat) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_mesh_to(mesh, &mut w, format)?;
    w.flush()?;
    Ok(())
}

/// Reads the ASCII PLY and OFF files this crate writes (triangle faces,
/// `x y z` leading vertex properties).
pub fn parse_mesh(text: &str) -> Result<TriangleMesh, IoError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (ln, first) = lines.next().ok_or_else(|| perr(1, "empty mesh file".into()))?;
    let (nv, nf) = match first.trim() {
        "OFF" => {
            let (ln, counts) = lines.next().ok_or_else(|| perr(ln + 1, "missing counts".into()))?;
            let c: Vec<&str> = counts.split_whitespace().collect();
            if c.len() < 2 {
                return Err(perr(ln + 1, "bad OFF counts".into()));
            }
            (num::<usize>(ln + 1, c[0])?, num::<usize>(ln + 1, c[1])?)
        }
        "ply" => {
            let (mut nv, mut nf) = (0, 0);
            loop {
                let (ln, l) = lines.next().ok_or_else(|| perr(ln + 1, "unterminated PLY header".into()))?;
                let f: Vec<&str> = l.split_whitespace().collect();
                match f.as_slice() {
                    ["end_header"] => break,
                    ["format", fmt, ..] if *fmt != "ascii" => return Err(perr(ln + 1, "only ASCII PLY is supported".into())),
                    ["element", "vertex", n] => nv = num(ln + 1, n)?,
                    ["element", "face", n] => nf = num(ln + 1, n)?,
                    _ => {}
                }
            }
            (nv, nf)
        }
        other => return Err(perr(ln + 1, format!("unknown mesh header {other:?}"))),
    };
    let mut mesh = TriangleMesh::default();
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or_else(|| perr(0, "truncated vertex list".into()))?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() < 3 {
            return Err(perr(ln + 1, "bad vertex".into()));
        }
        mesh.vertices.push(point(ln + 1, &f[..3])?);
    }
    for _ in 0..nf {
        let (ln, l) = lines.next().ok_or_else(|| perr(0, "truncated face list".into()))?;
        let f: Vec<u32> = l.split_whitespace().map(|s| num(ln + 1, s)).collect::<Result<_, _>>()?;
        if f.len() != 4 || f[0] != 3 || f[1..].iter().any(|&i| i as usize >= nv) {
            return Err(perr(ln + 1, "only valid triangles are supported".into()));
        }
        mesh.triangles.push([f[1], f[2], f[3]]);
    }
    Ok(mesh)
}

pub fn read_mesh(path: &Path) -> Result<TriangleMesh, IoError> {
    parse_mesh(&std::fs::read_to_string(path)?)
}

/// Writes one JSON object per line.
pub fn write_stats<T: Serialize>(records: &[T], w: &mut impl Write) -> Result<(), IoError> {
    for r in records {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_stats_file<T: Serialize>(records: &[T], path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_stats(records, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_stats<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, IoError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(IoError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "# test\nK 0\nC 0 0 0 0\nP 1 1.5 2 3\nP 2 -1 0.25 4\nO 0 1\nO 0 2\n";

    #[test]
    fn minimal_log() {
        let b = parse_log(MINIMAL).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].new_points.len(), 2);
        assert_eq!(b[0].observations, vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn out_of_order_index() {
        let err = parse_log("K 3\nC 0 0 0 0\nK 2\nC 1 0 0 0\n").unwrap_err();
        assert!(matches!(err, IoError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn unknown_ids() {
        assert!(matches!(parse_log("K 0\nC 0 0 0 0\nO 0 5\n"), Err(IoError::UnknownId { kind: "point", .. })));
        assert!(matches!(
            parse_log("K 0\nC 0 0 0 0\nP 5 1 1 1\nO 3 5\n"),
            Err(IoError::UnknownId { kind: "camera", .. })
        ));
        assert!(matches!(parse_log("K 0\nC 0 0 0 0\nM 9 1 1 1\n"), Err(IoError::UnknownId { .. })));
    }

    #[test]
    fn bad_records() {
        assert!(parse_log("P 1 0 0 0\n").is_err());
        assert!(parse_log("K 0\nP 1 0 0 0\n").is_err());
        assert!(parse_log("K 0\nC 0 0 0 0\nP 1 0 x 0\n").is_err());
        assert!(parse_log("K 0\nC 0 0 0 0\nZ 1\n").is_err());
    }

    #[test]
    fn round_trip_with_pose() {
        let mut b = KeyframeBatch::new(
            4,
            Camera {
                id: 2,
                center: Point::new(0.1, -0.2, 1e-7),
                pose: Some(Pose {
                    q: [1.0, 0.0, 0.0, 0.0],
                    intrinsics: [500.0, 500.0, 320.0, 240.0],
                }),
            },
        );
        b.new_points.push((1, Point::new(1.0 / 3.0, 2.0, -0.0)));
        b.observations.push((2, 1));
        let mut c = KeyframeBatch::new(5, Camera { id: 3, center: Point::new(1., 2., 3.), pose: None });
        c.moved_points.push((1, Point::new(0.3, 0.1 + 0.2, 7.0)));
        c.removed_points.push(1);
        let log = vec![b, c];
        assert_eq!(parse_log(&format_log(&log)).unwrap(), log);
    }

    #[test]
    fn mesh_round_trip() {
        let mesh = TriangleMesh {
            vertices: vec![Point::new(0., 0., 0.), Point::new(1., 0., 0.), Point::new(0., 1., 0.), Point::new(0., 0., 1.)],
            triangles: vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        };
        for fmt in [MeshFormat::Ply, MeshFormat::Off] {
            let mut buf = Vec::new();
            write_mesh_to(&mesh, &mut buf, fmt).unwrap();
            assert_eq!(parse_mesh(std::str::from_utf8(&buf).unwrap()).unwrap(), mesh);
            let mut empty = Vec::new();
            write_mesh_to(&TriangleMesh::default(), &mut empty, fmt).unwrap();
            assert!(parse_mesh(std::str::from_utf8(&empty).unwrap()).unwrap().is_empty());
        }
    }
}
