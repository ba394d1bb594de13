//! Parsing of `--set` specifications.

use anyhow::{bail, Context, Result};
use isps_core::benchmarks::CatalogEntry;
use isps_core::sets::BoundedSetApprox;

/// `auto` (the system's canonical analysis set), `origin`,
/// `point:a,b,...`, `ball:a,b,...:radius`, or `circle:n` (unit circle cloud,
/// planar systems only).
pub fn parse_set(spec: &str, entry: &CatalogEntry) -> Result<BoundedSetApprox> {
    let dim = entry.manifest.state_dim;
    let norm = entry.system.state_norm();
    if spec == "auto" {
        return Ok(entry.manifest.analysis_set.clone());
    }
    if spec == "origin" {
        return Ok(BoundedSetApprox::origin(dim, norm));
    }
    if let Some(rest) = spec.strip_prefix("point:") {
        let coords = parse_coords(rest)?;
        ensure_dim(coords.len(), dim)?;
        return BoundedSetApprox::singleton(coords, norm).map_err(into_anyhow);
    }
    if let Some(rest) = spec.strip_prefix("ball:") {
        let Some((coords_str, radius_str)) = rest.rsplit_once(':') else {
            bail!("ball spec needs 'ball:c1,..,cn:radius', got {spec:?}");
        };
        let coords = parse_coords(coords_str)?;
        ensure_dim(coords.len(), dim)?;
        let radius: f64 = radius_str
            .parse()
            .with_context(|| format!("invalid ball radius {radius_str:?}"))?;
        return BoundedSetApprox::ball(coords, radius, norm).map_err(into_anyhow);
    }
    if let Some(rest) = spec.strip_prefix("circle:") {
        if dim != 2 {
            bail!("circle sets require a planar system (state dimension 2, got {dim})");
        }
        let n: usize = rest.parse().with_context(|| format!("invalid circle count {rest:?}"))?;
        if n < 3 {
            bail!("circle sets need at least 3 points");
        }
        let points = (0..n)
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / n as f64;
                vec![th.cos(), th.sin()]
            })
            .collect();
        return BoundedSetApprox::new(points, 0.0, norm).map_err(into_anyhow);
    }
    bail!("unknown set spec {spec:?}; use auto | origin | point:... | ball:...:r | circle:n");
}

fn parse_coords(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .with_context(|| format!("invalid coordinate {p:?}"))
        })
        .collect()
}

fn ensure_dim(got: usize, want: usize) -> Result<()> {
    if got != want {
        bail!("set has dimension {got} but the system expects {want}");
    }
    Ok(())
}

fn into_anyhow(e: isps_core::Error) -> anyhow::Error {
    anyhow::anyhow!(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use isps_core::benchmarks::find;

    #[test]
    fn parses_the_documented_forms() {
        let entry = find("linear").unwrap();
        assert_eq!(parse_set("origin", &entry).unwrap().points(), &[vec![0.0]]);
        assert_eq!(parse_set("point:1.5", &entry).unwrap().points(), &[vec![1.5]]);
        let ball = parse_set("ball:0:2.0", &entry).unwrap();
        assert_eq!(ball.inflation(), 2.0);
        assert!(parse_set("circle:8", &entry).is_err(), "circle needs dim 2");

        let planar = find("planar-limit-cycle").unwrap();
        let circle = parse_set("circle:16", &planar).unwrap();
        assert_eq!(circle.points().len(), 16);
        assert!(parse_set("auto", &planar).is_ok());
    }

    #[test]
    fn rejects_garbage() {
        let entry = find("linear").unwrap();
        assert!(parse_set("blob", &entry).is_err());
        assert!(parse_set("point:1,2", &entry).is_err());
    }
}
