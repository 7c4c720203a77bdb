//! Planar geometry: poses, angle wrapping and the path centerline.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

/// Position in meters and heading in radians, normalized to (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    /// Expresses a world point in this pose's frame as (forward, left).
    pub fn to_local(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.heading.sin_cos();
        let dx = x - self.x;
        let dy = y - self.y;
        (c * dx + s * dy, -s * dx + c * dy)
    }

    /// Maps a local (forward, left) point back into the world frame.
    pub fn to_world(&self, forward: f64, left: f64) -> (f64, f64) {
        let (s, c) = self.heading.sin_cos();
        (
            self.x + forward * c - left * s,
            self.y + forward * s + left * c,
        )
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (x - self.x).hypot(y - self.y)
    }
}

/// Wraps an angle into (-pi, pi]. Angles already in range are returned
/// untouched so that negation commutes with normalization.
pub fn normalize_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut r = a % TAU;
    if r <= -PI {
        r += TAU;
    } else if r > PI {
        r -= TAU;
    }
    r
}

/// Nearest-point query result against the centerline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the foot point. May fall outside `[0, length]`: the
    /// first and last segments extend as straight rays.
    pub arc_length: f64,
    /// Signed offset, positive to the left of the travel direction.
    pub lateral: f64,
    /// Tangent heading at the foot point.
    pub tangent: f64,
    pub segment: usize,
}

/// Polyline centerline with a constant half-width.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    points: Vec<[f64; 2]>,
    cumulative: Vec<f64>,
    headings: Vec<f64>,
    half_width: f64,
}

impl Path {
    /// Needs at least two distinct points.
    pub fn new(points: Vec<[f64; 2]>, half_width: f64) -> Option<Self> {
        if points.len() < 2 {
            return None;
        }
        let mut cumulative = Vec::with_capacity(points.len());
        let mut headings = Vec::with_capacity(points.len() - 1);
        cumulative.push(0.0);
        for w in points.windows(2) {
            let dx = w[1][0] - w[0][0];
            let dy = w[1][1] - w[0][1];
            let len = dx.hypot(dy);
            if len <= 0.0 || !len.is_finite() {
                return None;
            }
            cumulative.push(cumulative.last().unwrap() + len);
            headings.push(dy.atan2(dx));
        }
        Some(Self {
            points,
            cumulative,
            headings,
            half_width,
        })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn segment_count(&self) -> usize {
        self.headings.len()
    }

    /// Segment index containing arc length `s` (clamped to the end segments).
    pub fn segment_at(&self, s: f64) -> usize {
        match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&s).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i.min(self.segment_count() - 1),
            Err(i) => i.saturating_sub(1).min(self.segment_count() - 1),
        }
    }

    /// Pose on the centerline at arc length `s`, shifted `lateral` meters to
    /// the left. Beyond either end the centerline continues straight.
    pub fn pose_at(&self, s: f64, lateral: f64) -> Pose {
        let i = self.segment_at(s);
        let h = self.headings[i];
        let (sn, cs) = h.sin_cos();
        let t = s - self.cumulative[i];
        let [x0, y0] = self.points[i];
        Pose {
            x: x0 + t * cs - lateral * sn,
            y: y0 + t * sn + lateral * cs,
            heading: h,
        }
    }

    /// Squared distance to segment `i` and the projection onto it. The first
    /// and last segments extend as rays.
    pub(crate) fn project_segment(&self, i: usize, x: f64, y: f64) -> (f64, Projection) {
        let [x0, y0] = self.points[i];
        let [x1, y1] = self.points[i + 1];
        let ex = x1 - x0;
        let ey = y1 - y0;
        let len2 = ex * ex + ey * ey;
        let len = self.cumulative[i + 1] - self.cumulative[i];
        let raw = ((x - x0) * ex + (y - y0) * ey) / len2;
        let last = self.segment_count() - 1;
        let mut t = raw;
        if i > 0 {
            t = t.max(0.0);
        }
        if i < last {
            t = t.min(1.0);
        }
        let (d2, lateral) = if t == raw {
            // Interior foot point: signed perpendicular distance.
            let cross = ex * (y - y0) - ey * (x - x0);
            let lat = cross / len;
            (lat * lat, lat)
        } else {
            let dx = x - (x0 + t * ex);
            let dy = y - (y0 + t * ey);
            let dist = (dx * dx + dy * dy).sqrt();
            let cross = ex * dy - ey * dx;
            (dist * dist, if cross >= 0.0 { dist } else { -dist })
        };
        (
            d2,
            Projection {
                arc_length: self.cumulative[i] + t * len,
                lateral,
                tangent: self.headings[i],
                segment: i,
            },
        )
    }

    /// Nearest point over all segments.
    pub fn project(&self, x: f64, y: f64) -> Projection {
        self.project_within(x, y, 0, self.segment_count())
    }

    /// Nearest point restricted to segments `[first, end)`.
    pub fn project_within(&self, x: f64, y: f64, first: usize, end: usize) -> Projection {
        let end = end.min(self.segment_count()).max(first + 1);
        let mut best = self.project_segment(first, x, y);
        for i in first + 1..end {
            let cand = self.project_segment(i, x, y);
            if cand.0 < best.0 {
                best = cand;
            }
        }
        best.1
    }

    /// Segment window covering arc lengths `[s - radius, s + radius]`.
    pub fn window(&self, s: f64, radius: f64) -> (usize, usize) {
        let first = self.segment_at(s - radius);
        let last = self.segment_at(s + radius);
        (first, last + 1)
    }

    /// Same path reflected across the x axis.
    pub fn mirrored(&self) -> Self {
        let pts = self.points.iter().map(|p| [p[0], -p[1]]).collect();
        Self::new(pts, self.half_width).expect("reflection preserves validity")
    }
}
