use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use super::{GazeSample, Scene, SceneError, Vec3};

impl Scene {
    pub fn from_json(s: &str) -> Result<Self, SceneError> {
        let scene: Scene = serde_json::from_str(s)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Self, SceneError> {
        let scene: Scene = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn save(&self, path: &Path) -> Result<(), SceneError> {
        let mut f = File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

const HEADER: [&str; 7] = ["t_us", "ox", "oy", "oz", "dx", "dy", "dz"];

/// Writes `t_us,ox,oy,oz,dx,dy,dz` rows.
pub fn write_gaze_trace<W: Write>(w: W, samples: &[GazeSample]) -> Result<(), SceneError> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(HEADER)?;
    for s in samples {
        let (o, d) = (s.origin, s.dir);
        out.write_record([
            s.timestamp_us.to_string(),
            o.x.to_string(),
            o.y.to_string(),
            o.z.to_string(),
            d.x.to_string(),
            d.y.to_string(),
            d.z.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a gaze CSV. Directions are renormalized; zero directions are an error.
pub fn read_gaze_trace<R: Read>(r: R) -> Result<Vec<GazeSample>, SceneError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != HEADER {
        return Err(SceneError::Format(format!("header must be {}", HEADER.join(","))));
    }
    let mut samples = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let t_us: i64 = rec[0]
            .parse()
            .map_err(|_| SceneError::Format(format!("line {line}, column t_us: bad integer {:?}", &rec[0])))?;
        let mut v = [0.0; 6];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = rec[i + 1]
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| SceneError::Format(format!("line {line}, column {}: bad number", HEADER[i + 1])))?;
        }
        let dir = Vec3::new(v[3], v[4], v[5]);
        if dir.norm() < 1e-12 {
            return Err(SceneError::Format(format!("line {line}: zero gaze direction")));
        }
        samples.push(GazeSample::new(t_us, Vec3::new(v[0], v[1], v[2]), dir));
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaze_round_trip() {
        let s = vec![
            GazeSample::new(0, Vec3::default(), Vec3::new(0.1, 0.0, 1.0)),
            GazeSample::new(5000, Vec3::new(0.0, 0.01, 0.0), Vec3::new(0.0, -0.2, 1.0)),
        ];
        let mut buf = Vec::new();
        write_gaze_trace(&mut buf, &s).unwrap();
        assert!(buf.starts_with(b"t_us,ox,oy,oz,dx,dy,dz\n"));
        assert_eq!(read_gaze_trace(&buf[..]).unwrap(), s);
    }

    #[test]
    fn bad_gaze_rows() {
        let bad = "t_us,ox,oy,oz,dx,dy,dz\n0,0,0,0,0,0,0\n";
        assert!(matches!(read_gaze_trace(bad.as_bytes()), Err(SceneError::Format(_))));
        let bad = "t_us,ox,oy,oz,dx,dy,dz\n0,0,0,x,0,0,1\n";
        let e = read_gaze_trace(bad.as_bytes()).unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("oz"), "{e}");
    }

    #[test]
    fn scene_json_rejects_unknown_keys() {
        let ok = r#"{"objects":[{"id":1,"class":"pen","aabb":{"min":[0,0,1],"max":[0.1,0.1,1.1]},"yaw":0,"grasp_size_m":0.01}],
            "camera":{"focal_px":500,"baseline_m":0.06,"width":640,"height":480}}"#;
        assert_eq!(Scene::from_json(ok).unwrap().objects[0].class_label, super::super::ObjectClass::Pen);
        let bad = ok.replace("\"yaw\"", "\"colour\":1,\"yaw\"");
        assert!(Scene::from_json(&bad).is_err());
    }
}
