//! Field files: `t,x0[,x1],value,region,action`, one row per node, levels
//! in time order and nodes in row-major order. Floats use the shortest
//! representation that reads back to the same bits.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::field::{Region, ValueField};
use crate::grid::{Axis, SpaceTimeGrid, SpatialGrid};
use crate::problem::ProblemSpec;

use super::IoError;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn header(dim: usize) -> String {
    let axes: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    format!("t,{},value,region,action", axes.join(","))
}

fn join(values: &[f64], sep: &str) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(sep)
}

/// Streams `field` as CSV. Actions are written as the shift vector, with
/// coordinates joined by `;`.
pub fn write_field_to<W: Write>(field: &ValueField, spec: &ProblemSpec, mut out: W) -> std::io::Result<()> {
    let space = &field.grid.space;
    writeln!(out, "{}", header(space.dim()))?;
    let mut x = vec![0.0; space.dim()];
    for k in 0..field.levels() {
        let t = field.grid.time(k);
        for node in 0..space.len() {
            space.coords(node, &mut x);
            let region = field.regions[k][node];
            let action = match (region, field.actions[k][node]) {
                (Region::PlayerI, Some(a)) => join(&spec.impulses_u.actions[a], ";"),
                (Region::PlayerII, Some(a)) => join(&spec.impulses_v.actions[a], ";"),
                _ => String::new(),
            };
            writeln!(out, "{t:?},{},{:?},{},{action}", join(&x, ","), field.values[k][node], region)?;
        }
    }
    out.flush()
}

pub fn write_field(field: &ValueField, spec: &ProblemSpec, path: &Path) -> Result<(), IoError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_field_to(field, spec, BufWriter::new(file)).map_err(io_err(path))
}

fn parse_f64(s: &str, line: usize) -> Result<f64, IoError> {
    s.parse().map_err(|_| IoError::Csv { line, message: format!("bad number {s:?}") })
}

/// Axis through the sorted distinct coordinates `coords`.
fn axis_from(coords: &[f64], line: usize) -> Result<Axis, IoError> {
    let count = coords.len();
    if count < 2 {
        return Err(IoError::Csv { line, message: "each axis needs at least two nodes".into() });
    }
    let step = (coords[count - 1] - coords[0]) / (count - 1) as f64;
    let axis = Axis { min: coords[0], step, count };
    let off = coords.iter().enumerate().map(|(j, &c)| (axis.coord(j) - c).abs()).fold(0.0, f64::max);
    if off > 1e-9 * (1.0 + step) {
        return Err(IoError::Csv { line, message: "coordinates are not evenly spaced".into() });
    }
    Ok(axis)
}

/// Reads a field written by [`write_field`]. Actions are matched back to
/// their index in the problem's impulse sets.
pub fn read_field_from<R: BufRead>(input: R, spec: &ProblemSpec) -> Result<ValueField, IoError> {
    let mut lines = input.lines();
    let first = lines.next().ok_or(IoError::Csv { line: 1, message: "empty file".into() })??;
    let cols: Vec<&str> = first.split(',').collect();
    let dim = cols.len().checked_sub(4).filter(|d| (1..=2).contains(d)).ok_or(IoError::Csv {
        line: 1,
        message: "header must be t,x0[,x1],value,region,action".into(),
    })?;
    if first != header(dim) {
        return Err(IoError::Csv { line: 1, message: format!("unexpected header {first:?}") });
    }
    let mut times: Vec<f64> = Vec::new();
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut regions: Vec<Vec<Region>> = Vec::new();
    let mut actions: Vec<Vec<Option<usize>>> = Vec::new();
    let mut line_no = 1;
    for line in lines {
        line_no += 1;
        let line = line?;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != dim + 4 {
            return Err(IoError::Csv { line: line_no, message: format!("expected {} columns", dim + 4) });
        }
        let t = parse_f64(cells[0], line_no)?;
        if times.last() != Some(&t) {
            times.push(t);
            values.push(Vec::new());
            regions.push(Vec::new());
            actions.push(Vec::new());
        }
        if times.len() == 1 {
            points.push(cells[1..=dim].iter().map(|c| parse_f64(c, line_no)).collect::<Result<_, _>>()?);
        }
        let region: Region = cells[dim + 2]
            .parse()
            .map_err(|_| IoError::Csv { line: line_no, message: format!("bad region {:?}", cells[dim + 2]) })?;
        let action = match region {
            Region::Cont => None,
            r => {
                let shift: Vec<f64> = cells[dim + 3].split(';').map(|c| parse_f64(c, line_no)).collect::<Result<_, _>>()?;
                let set = if r == Region::PlayerI { &spec.impulses_u } else { &spec.impulses_v };
                Some(set.position(&shift, 1e-12).ok_or(IoError::Csv {
                    line: line_no,
                    message: format!("action {shift:?} is not in the impulse set"),
                })?)
            }
        };
        values.last_mut().expect("pushed above").push(parse_f64(cells[dim + 1], line_no)?);
        regions.last_mut().expect("pushed above").push(region);
        actions.last_mut().expect("pushed above").push(action);
    }
    if times.len() < 2 {
        return Err(IoError::Csv { line: line_no, message: "a field needs at least two time levels".into() });
    }
    let mut axes = Vec::with_capacity(dim);
    for a in 0..dim {
        let mut c: Vec<f64> = points.iter().map(|p| p[a]).collect();
        c.sort_by(f64::total_cmp);
        c.dedup();
        axes.push(axis_from(&c, line_no)?);
    }
    let space = SpatialGrid::new(axes)?;
    if values.iter().any(|v| v.len() != space.len()) {
        return Err(IoError::Csv { line: line_no, message: "levels have different node counts".into() });
    }
    let grid = SpaceTimeGrid::new(space, times[times.len() - 1], times.len() - 1)?;
    let mut field = ValueField::unlabeled(grid, values);
    field.regions = regions;
    field.actions = actions;
    Ok(field)
}

pub fn read_field(path: &Path, spec: &ProblemSpec) -> Result<ValueField, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_field_from(BufReader::new(file), spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hjbi::{pde_grid, terminal_projection, SolverOptions};
    use crate::problem::{canonical, CoefficientForm, DiscreteImpulseSet, SetLabel};

    fn to_string(field: &ValueField, spec: &ProblemSpec) -> String {
        let mut buf = Vec::new();
        write_field_to(field, spec, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn three_node_frozen_field() {
        let spec = canonical("P0").unwrap();
        let space = SpatialGrid::from_box(&[[-1.0, 1.0]], 1.0).unwrap();
        let grid = SpaceTimeGrid::new(space, 1.0, 1).unwrap();
        let field = ValueField::unlabeled(grid, vec![vec![1.0; 3]; 2]);
        let text = to_string(&field, &spec);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x0,value,region,action");
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[1], "0.0,-1.0,1.0,CONT,");
        assert!(lines[1..].iter().all(|l| l.ends_with(",CONT,")));
    }

    #[test]
    fn hand_terminal_row() {
        let mut spec = canonical("P3").unwrap();
        spec.terminal = CoefficientForm::tabulated(&[vec![-2.0, 1.0, 2.0]], &[0.0, 0.0, 1.0]);
        spec.impulses_u = DiscreteImpulseSet::scalar(SetLabel::PlayerI, &[2.0]);
        spec.impulses_v = DiscreteImpulseSet::scalar(SetLabel::PlayerII, &[-2.0]);
        spec.domain = vec![[-2.0, 2.0]];
        let space = SpatialGrid::from_box(&spec.domain, 1.0).unwrap();
        let p = terminal_projection(&spec, &space, &SolverOptions::default()).unwrap();
        let grid = SpaceTimeGrid::new(space, 1.0, 1).unwrap();
        let mut field = ValueField::unlabeled(grid, vec![p.slice.values.clone(); 2]);
        field.regions[1] = p.regions;
        field.actions[1] = p.actions;
        let text = to_string(&field, &spec);
        assert_eq!(text.lines().last().unwrap(), "1.0,2.0,0.6,II_INT,-2.0");
        assert_eq!(read_field_from(text.as_bytes(), &spec).unwrap(), field);
    }

    #[test]
    fn solved_field_round_trips_bit_exactly() {
        let spec = canonical("P3").unwrap();
        let space = SpatialGrid::from_box(&spec.domain, 0.2).unwrap();
        let grid = pde_grid(&spec, space, 0.9).unwrap();
        let field = crate::solve_pde(&spec, &grid, &SolverOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.csv");
        write_field(&field, &spec, &path).unwrap();
        let back = read_field(&path, &spec).unwrap();
        for (a, b) in field.values.iter().flatten().zip(back.values.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.regions, field.regions);
        assert_eq!(back.actions, field.actions);
        assert_eq!(back.grid.steps, field.grid.steps);
    }

    #[test]
    fn malformed_rows_are_rejected() {
        let spec = canonical("P0").unwrap();
        assert!(read_field_from("t,x0,value,region\n".as_bytes(), &spec).is_err());
        assert!(read_field_from("t,x0,value,region,action\n0.0,0.0,1.0,CONT\n".as_bytes(), &spec).is_err());
        let bad = "t,x0,value,region,action\n0.0,0.0,1.0,HOLD,\n";
        assert!(matches!(read_field_from(bad.as_bytes(), &spec), Err(IoError::Csv { line: 2, .. })));
    }
}
