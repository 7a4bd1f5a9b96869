//! Classical reference constellations, minimum-distance detection and the
//! constellation CSV format.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::systems::Constellation;

/// Reflected binary Gray code of `j`.
pub fn gray(j: usize) -> usize {
    j ^ (j >> 1)
}

fn bits_msb(v: usize, width: usize) -> impl Iterator<Item = u8> {
    (0..width).rev().map(move |b| ((v >> b) & 1) as u8)
}

/// One complex channel use: `(re, im)` points and their labels.
fn single_use(bits_per_use: usize) -> Result<Vec<([f64; 2], Vec<u8>)>> {
    match bits_per_use {
        1 => Ok(vec![([-1.0, 0.0], vec![0]), ([1.0, 0.0], vec![1])]),
        b if b >= 2 && b % 2 == 0 && b <= 16 => {
            let k = b / 2;
            let levels = 1usize << k;
            let amp = |j: usize| 2.0 * j as f64 - (levels - 1) as f64;
            let mut out = Vec::with_capacity(levels * levels);
            for i in 0..levels {
                for q in 0..levels {
                    let label = bits_msb(gray(i), k).chain(bits_msb(gray(q), k)).collect();
                    out.push(([amp(i), amp(q)], label));
                }
            }
            Ok(out)
        }
        b => Err(Error::InvalidParameter(format!(
            "unsupported bits per channel use {b}: need 1 or an even number up to 16"
        ))),
    }
}

/// Gray-labelled square QAM (BPSK for one bit) repeated over `uses` complex
/// channel uses. Points are the Cartesian product with the first use most
/// significant; labels are concatenated per use. Scaled to unit average
/// energy per complex channel use, so QPSK sits at `(±1/√2, ±1/√2)`.
pub fn qam_constellation(bits_per_use: usize, uses: usize) -> Result<Constellation> {
    if uses == 0 {
        return Err(Error::InvalidParameter("need at least one channel use".into()));
    }
    if bits_per_use * uses > 20 {
        return Err(Error::InvalidParameter(format!(
            "{} bits per block is too large to enumerate",
            bits_per_use * uses
        )));
    }
    let base = single_use(bits_per_use)?;
    let mut points = vec![Vec::new()];
    let mut labels = vec![Vec::new()];
    for _ in 0..uses {
        let mut np = Vec::with_capacity(points.len() * base.len());
        let mut nl = Vec::with_capacity(points.len() * base.len());
        for (p, l) in points.iter().zip(&labels) {
            for (s, sl) in &base {
                let mut p2: Vec<f64> = p.clone();
                p2.extend_from_slice(s);
                let mut l2: Vec<u8> = l.clone();
                l2.extend(sl);
                np.push(p2);
                nl.push(l2);
            }
        }
        points = np;
        labels = nl;
    }
    let raw = Constellation::new(points, labels)?;
    // per complex use = 2 × per real component
    let alpha = (1.0 / (2.0 * raw.avg_power_per_component())).sqrt();
    Ok(raw.scaled(alpha))
}

/// Index of the nearest point in squared Euclidean distance; lowest index wins ties.
pub fn ml_detect(constellation: &Constellation, received: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in constellation.points().iter().enumerate() {
        let d: f64 = p.iter().zip(received).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Writes a constellation as CSV. `provenance` pairs become leading `# key=value` lines.
pub fn write_constellation_csv<W: Write>(
    constellation: &Constellation,
    provenance: &[(&str, String)],
    out: W,
) -> Result<()> {
    let mut out = out;
    for (k, v) in provenance {
        writeln!(out, "# {k}={v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["index".to_string(), "label_bits".to_string()];
    header.extend((1..=constellation.dim()).map(|j| format!("c{j}")));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..constellation.len() {
        let mut row = vec![
            i.to_string(),
            constellation.label(i).iter().map(|b| char::from(b'0' + b)).collect(),
        ];
        row.extend(constellation.point(i).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_constellation(
    constellation: &Constellation,
    provenance: &[(&str, String)],
    path: impl AsRef<Path>,
) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_constellation_csv(constellation, provenance, std::io::BufWriter::new(f))
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Parses the constellation CSV format. Lines starting with `#` are ignored.
pub fn read_constellation_csv<R: Read>(input: R) -> Result<Constellation> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let header_line = rdr.position().line() as usize;
    let m = header.len().saturating_sub(2);
    let expected: Vec<String> = ["index".to_string(), "label_bits".to_string()]
        .into_iter()
        .chain((1..=m).map(|j| format!("c{j}")))
        .collect();
    if m == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Parse {
            line: header_line.max(1),
            message: format!("expected header `{}`", expected.join(",")),
        });
    }

    let mut points = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |message: String| Error::Parse { line, message };
        if rec.len() != m + 2 {
            return Err(bad(format!("expected {} fields, found {}", m + 2, rec.len())));
        }
        let index: usize = rec[0].parse().map_err(|_| bad(format!("bad index `{}`", &rec[0])))?;
        if index != points.len() {
            return Err(bad(format!("expected index {}, found {index}", points.len())));
        }
        let label = rec[1]
            .bytes()
            .map(|c| match c {
                b'0' => Ok(0),
                b'1' => Ok(1),
                _ => Err(bad(format!("bad label `{}`", &rec[1]))),
            })
            .collect::<Result<Vec<u8>>>()?;
        let point = (2..m + 2)
            .map(|j| {
                rec[j]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(format!("bad coordinate `{}`", &rec[j])))
            })
            .collect::<Result<Vec<f64>>>()?;
        points.push(point);
        labels.push(label);
    }
    if points.is_empty() {
        return Err(Error::Parse {
            line: header_line.max(1),
            message: "no constellation rows".into(),
        });
    }
    Constellation::new(points, labels)
}

pub fn import_constellation(path: impl AsRef<Path>) -> Result<Constellation> {
    read_constellation_csv(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qpsk_points() {
        let c = qam_constellation(2, 1).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(c.len(), 4);
        for p in c.points() {
            assert!((p[0].abs() - s).abs() < 1e-15 && (p[1].abs() - s).abs() < 1e-15);
        }
        assert_eq!(c.label(3), &[1, 1]);
    }

    #[test]
    fn product_sizes() {
        let c = qam_constellation(2, 2).unwrap();
        assert_eq!((c.len(), c.dim(), c.label_bits()), (16, 4, 4));
        let c = qam_constellation(4, 1).unwrap();
        assert_eq!((c.len(), c.dim()), (16, 2));
        let c = qam_constellation(1, 3).unwrap();
        assert_eq!((c.len(), c.dim()), (8, 6));
    }

    #[test]
    fn unit_energy_per_use() {
        for (b, u) in [(1, 1), (2, 1), (2, 2), (4, 1), (6, 1), (4, 2)] {
            let c = qam_constellation(b, u).unwrap();
            assert!((2.0 * c.avg_power_per_component() - 1.0).abs() < 1e-12, "{b} {u}");
        }
    }

    #[test]
    fn unsupported_sizes() {
        assert!(qam_constellation(3, 1).is_err());
        assert!(qam_constellation(0, 1).is_err());
        assert!(qam_constellation(2, 0).is_err());
    }

    #[test]
    fn gray_axis_neighbours() {
        let c = qam_constellation(4, 1).unwrap();
        // index = 4·i + q; horizontal/vertical neighbours differ in one bit
        for i in 0..4 {
            for q in 0..4 {
                let a = c.label(4 * i + q);
                let mut nbrs = vec![];
                if i < 3 {
                    nbrs.push(4 * (i + 1) + q);
                }
                if q < 3 {
                    nbrs.push(4 * i + q + 1);
                }
                for n in nbrs {
                    let d = a.iter().zip(c.label(n)).filter(|(x, y)| x != y).count();
                    assert_eq!(d, 1);
                }
            }
        }
    }

    #[test]
    fn detect_exact_and_ties() {
        let c = qam_constellation(2, 1).unwrap();
        for i in 0..4 {
            assert_eq!(ml_detect(&c, c.point(i)), i);
        }
        // origin is equidistant from all four
        assert_eq!(ml_detect(&c, &[0.0, 0.0]), 0);
        // (10, 0.1): nearest is (+, +)
        assert_eq!(ml_detect(&c, &[10.0, 0.1]), 3);
    }

    #[test]
    fn csv_round_trip() {
        let c = qam_constellation(4, 1).unwrap();
        let mut buf = Vec::new();
        write_constellation_csv(&c, &[("seed", "7".into())], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# seed=7\nindex,label_bits,c1,c2\n"));
        assert_eq!(read_constellation_csv(buf.as_slice()).unwrap(), c);
    }

    #[test]
    fn csv_errors_carry_line() {
        let text = "# x=1\nindex,label_bits,c1,c2\n0,00,1.0,1.0\n1,01,abc,1.0\n";
        match read_constellation_csv(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let text = "index,label_bits,c1,c2\n0,00,1.0\n";
        match read_constellation_csv(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(read_constellation_csv("index,foo\n".as_bytes()).is_err());
    }
}
