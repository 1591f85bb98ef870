//! Grid-maze navigation benchmark.
//!
//! Rooms sit on a `rows x cols` grid, numbered row-major (`s = r * cols + c`,
//! row 0 is the northern edge). The outer boundary is always walled; interior
//! walls are listed as pairs of adjacent rooms.
//!
//! Actions are `0..4` = north, south, east, west moves and `4`, `5` = sense
//! north-south, sense east-west. A move goes in the intended direction with
//! probability `1 - noise` and slips to each perpendicular direction with
//! probability `noise / 2`; moving into a wall leaves the robot in place.
//!
//! Observations `0..4` are north-south readings and `4..8` east-west
//! readings, encoded as `2 * wall_first + wall_second` within each axis.
//! Move actions always emit observation `0`, which carries no information
//! because the observation model is conditioned on the action.
//!
//! Any move taken in the target room pays the target reward and restarts the
//! robot uniformly at random.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Labels, Pomdp};

pub const NORTH: usize = 0;
pub const SOUTH: usize = 1;
pub const EAST: usize = 2;
pub const WEST: usize = 3;
pub const SENSE_NS: usize = 4;
pub const SENSE_EW: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MazeLayout {
    pub rows: usize,
    pub cols: usize,
    /// Interior walls between orthogonally adjacent rooms.
    pub walls: Vec<[usize; 2]>,
    pub target: usize,
}

/// Probability of reading the true wall configuration on one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorAccuracy {
    pub two_wall: f64,
    pub one_wall: f64,
    pub no_wall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MazeRewards {
    #[serde(rename = "move")]
    pub move_step: f64,
    pub sense: f64,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MazeSpec {
    pub layout: MazeLayout,
    /// Total slip probability, split evenly between the two lateral moves.
    pub noise: f64,
    pub sensors: SensorAccuracy,
    pub rewards: MazeRewards,
    pub discount: f64,
}

impl Default for MazeSpec {
    /// A 4x5 twenty-room layout with eleven interior walls and the target in
    /// room 12. The wall set is a documented choice, not a reproduction of
    /// any published figure.
    fn default() -> Self {
        Self {
            layout: MazeLayout {
                rows: 4,
                cols: 5,
                walls: vec![
                    [1, 2],
                    [5, 6],
                    [7, 8],
                    [12, 13],
                    [6, 11],
                    [2, 7],
                    [3, 8],
                    [10, 15],
                    [11, 16],
                    [13, 18],
                    [9, 14],
                ],
                target: 12,
            },
            noise: 0.3,
            sensors: SensorAccuracy {
                two_wall: 0.75,
                one_wall: 0.8,
                no_wall: 0.89,
            },
            rewards: MazeRewards {
                move_step: 4.0,
                sense: 2.0,
                target: 150.0,
            },
            discount: 0.9,
        }
    }
}

struct Geometry {
    rows: usize,
    cols: usize,
    walls: std::collections::HashSet<(usize, usize)>,
}

impl Geometry {
    /// Room reached by moving from `s` in `dir`, or `None` when blocked.
    fn neighbor(&self, s: usize, dir: usize) -> Option<usize> {
        let (r, c) = (s / self.cols, s % self.cols);
        let next = match dir {
            NORTH if r > 0 => s - self.cols,
            SOUTH if r + 1 < self.rows => s + self.cols,
            EAST if c + 1 < self.cols => s + 1,
            WEST if c > 0 => s - 1,
            _ => return None,
        };
        let key = (s.min(next), s.max(next));
        (!self.walls.contains(&key)).then_some(next)
    }
}

fn adjacent(cols: usize, a: usize, b: usize) -> bool {
    let (lo, hi) = (a.min(b), a.max(b));
    (hi - lo == cols) || (hi - lo == 1 && lo / cols == hi / cols)
}

fn lateral(dir: usize) -> [usize; 2] {
    if dir == NORTH || dir == SOUTH {
        [EAST, WEST]
    } else {
        [NORTH, SOUTH]
    }
}

/// Builds the maze POMDP described by `spec`.
pub fn build_maze20(spec: &MazeSpec) -> Result<Pomdp> {
    let l = &spec.layout;
    let n = l.rows * l.cols;
    if n == 0 {
        return Err(Error::InvalidMaze("layout has no rooms".into()));
    }
    if l.target >= n {
        return Err(Error::InvalidMaze(format!("target {} is not a room", l.target)));
    }
    if !(0.0..=1.0).contains(&spec.noise) {
        return Err(Error::InvalidMaze(format!("noise {} outside [0, 1]", spec.noise)));
    }
    let s = spec.sensors;
    for acc in [s.two_wall, s.one_wall, s.no_wall] {
        if !(0.0..=1.0).contains(&acc) {
            return Err(Error::InvalidMaze(format!("sensor accuracy {acc} outside [0, 1]")));
        }
    }
    let mut walls = std::collections::HashSet::new();
    for &[a, b] in &l.walls {
        if a >= n || b >= n || !adjacent(l.cols, a, b) {
            return Err(Error::InvalidMaze(format!("wall [{a}, {b}] does not separate adjacent rooms")));
        }
        walls.insert((a.min(b), a.max(b)));
    }
    let geo = Geometry {
        rows: l.rows,
        cols: l.cols,
        walls,
    };
    check_connected(&geo, n)?;

    let (na, no) = (6, 8);
    let mut trans = vec![0.0; na * n * n];
    let mut reward = vec![0.0; na * n * n];
    let mut obs = vec![0.0; na * n * no];
    let idx = |a: usize, s: usize, t: usize| (a * n + s) * n + t;

    for dir in [NORTH, SOUTH, EAST, WEST] {
        for room in 0..n {
            if room == l.target {
                for t in 0..n {
                    trans[idx(dir, room, t)] = 1.0 / n as f64;
                    reward[idx(dir, room, t)] = spec.rewards.target;
                }
                continue;
            }
            let slip = spec.noise / 2.0;
            let outcomes = [
                (dir, 1.0 - spec.noise),
                (lateral(dir)[0], slip),
                (lateral(dir)[1], slip),
            ];
            for (d, p) in outcomes {
                let t = geo.neighbor(room, d).unwrap_or(room);
                trans[idx(dir, room, t)] += p;
            }
            for t in 0..n {
                if t != room {
                    reward[idx(dir, room, t)] = spec.rewards.move_step;
                }
            }
        }
        for t in 0..n {
            obs[(dir * n + t) * no] = 1.0;
        }
    }
    for (a, dirs, offset) in [(SENSE_NS, [NORTH, SOUTH], 0), (SENSE_EW, [EAST, WEST], 4)] {
        for room in 0..n {
            trans[idx(a, room, room)] = 1.0;
            for t in 0..n {
                reward[idx(a, room, t)] = spec.rewards.sense;
            }
            let first = geo.neighbor(room, dirs[0]).is_none() as usize;
            let second = geo.neighbor(room, dirs[1]).is_none() as usize;
            let truth = 2 * first + second;
            let acc = match first + second {
                2 => s.two_wall,
                1 => s.one_wall,
                _ => s.no_wall,
            };
            for reading in 0..4 {
                obs[(a * n + room) * no + offset + reading] =
                    if reading == truth { acc } else { (1.0 - acc) / 3.0 };
            }
        }
    }
    let labels = Labels {
        states: None,
        actions: Some(
            ["north", "south", "east", "west", "sense-ns", "sense-ew"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        ),
        observations: None,
    };
    Pomdp::from_flat(n, na, no, trans, obs, reward, spec.discount, labels)
}

fn check_connected(geo: &Geometry, n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(s) = stack.pop() {
        for d in [NORTH, SOUTH, EAST, WEST] {
            if let Some(t) = geo.neighbor(s, d) {
                if !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
    }
    match seen.iter().position(|v| !v) {
        Some(s) => Err(Error::InvalidMaze(format!("room {s} is walled off"))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sizes() {
        let m = build_maze20(&MazeSpec::default()).unwrap();
        assert_eq!((m.num_states(), m.num_actions(), m.num_obs()), (20, 6, 8));
        assert_eq!(m.discount(), 0.9);
    }

    #[test]
    fn move_noise_split() {
        // Room 6 sits at row 1, column 1 with a wall on its west side.
        let m = build_maze20(&MazeSpec::default()).unwrap();
        let row = m.trans_row(NORTH, 6);
        assert!((row[1] - 0.7).abs() < 1e-12);
        assert!((row[7] - 0.15).abs() < 1e-12);
        assert!((row[6] - 0.15).abs() < 1e-12);
    }

    #[test]
    fn sensor_accuracy_by_wall_count() {
        let m = build_maze20(&MazeSpec::default()).unwrap();
        // Room 0: north boundary, south open.
        assert!((m.obs_row(SENSE_NS, 0)[2] - 0.8).abs() < 1e-12);
        // Room 2: north boundary and the [2,7] wall.
        assert!((m.obs_row(SENSE_NS, 2)[3] - 0.75).abs() < 1e-12);
        // Room 12: open north and south.
        assert!((m.obs_row(SENSE_NS, 12)[0] - 0.89).abs() < 1e-12);
        assert!((m.obs_row(SENSE_NS, 12)[1] - 0.11 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn target_payoff_and_restart() {
        let m = build_maze20(&MazeSpec::default()).unwrap();
        assert!((m.rho().get(12, EAST) - 150.0).abs() < 1e-12);
        assert!(m.trans_row(EAST, 12).iter().all(|p| (p - 0.05).abs() < 1e-12));
    }

    #[test]
    fn rejects_bad_geometry() {
        let mut spec = MazeSpec::default();
        spec.layout.walls.push([0, 6]);
        assert!(build_maze20(&spec).is_err());
        let mut spec = MazeSpec::default();
        spec.layout.walls.extend([[0, 1], [0, 5]]);
        assert!(build_maze20(&spec).is_err());
    }
}
