//! Point clouds as CSV with a header `x,y,z[,r,g,b][,nx,ny,nz]`.
//!
//! Colors are stored in `[0, 255]` and mapped to `[0, 1]` on read.

use std::io::{Read, Write};

use nalgebra::Vector3;

use super::IoError;
use crate::types::PointCloud;

pub fn read_csv_cloud<R: Read>(reader: R) -> Result<PointCloud, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let triple = |names: [&str; 3]| -> Result<Option<[usize; 3]>, IoError> {
        let found = names.map(find);
        match found {
            [Some(a), Some(b), Some(c)] => Ok(Some([a, b, c])),
            [None, None, None] => Ok(None),
            _ => Err(IoError::MalformedHeader {
                line: 1,
                reason: format!("columns {} must appear together", names.join("/")),
            }),
        }
    };
    let xyz = triple(["x", "y", "z"])?.ok_or_else(|| IoError::MalformedHeader {
        line: 1,
        reason: "header needs x,y,z".into(),
    })?;
    let rgb = triple(["r", "g", "b"])?;
    let normal = triple(["nx", "ny", "nz"])?;

    let mut cloud = PointCloud {
        colors: rgb.map(|_| Vec::new()),
        normals: normal.map(|_| Vec::new()),
        ..Default::default()
    };
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line() as usize);
        let get = |idx: [usize; 3]| -> Result<Vector3<f64>, IoError> {
            let mut v = Vector3::zeros();
            for (k, &i) in idx.iter().enumerate() {
                let field = record.get(i).ok_or_else(|| IoError::BadRecord {
                    line,
                    reason: format!("missing column {}", &headers[i]),
                })?;
                v[k] = field.parse().map_err(|_| IoError::BadRecord {
                    line,
                    reason: format!("`{field}` is not a number"),
                })?;
            }
            Ok(v)
        };
        cloud.positions.push(get(xyz)?);
        if let (Some(idx), Some(c)) = (rgb, cloud.colors.as_mut()) {
            c.push(get(idx)? / 255.0);
        }
        if let (Some(idx), Some(n)) = (normal, cloud.normals.as_mut()) {
            n.push(get(idx)?);
        }
    }
    Ok(cloud)
}

pub fn write_csv_cloud<W: Write>(writer: W, cloud: &PointCloud) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["x", "y", "z"];
    if cloud.colors.is_some() {
        header.extend(["r", "g", "b"]);
    }
    if cloud.normals.is_some() {
        header.extend(["nx", "ny", "nz"]);
    }
    w.write_record(&header)?;
    for (i, p) in cloud.positions.iter().enumerate() {
        let mut row: Vec<String> = p.iter().map(f64::to_string).collect();
        if let Some(c) = &cloud.colors {
            row.extend(c[i].iter().map(|v| (v * 255.0).to_string()));
        }
        if let Some(n) = &cloud.normals {
            row.extend(n[i].iter().map(f64::to_string));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
