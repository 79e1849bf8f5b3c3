//! Minimal SVG writer for overhead plots: world coordinates in meters,
//! y axis pointing up, a light 10 m reference grid.

use coopsense::geometry::ConfidenceEllipse;

pub struct SvgCanvas {
    min_x: f64,
    min_y: f64,
    max_x: f64,
    max_y: f64,
    grid_step: f64,
    elements: Vec<String>,
}

fn fmt(v: f64) -> String {
    format!("{:.3}", v)
}

impl SvgCanvas {
    pub fn new(grid_step: f64) -> Self {
        Self {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
            grid_step,
            elements: Vec::new(),
        }
    }

    pub fn include(&mut self, x: f64, y: f64) {
        self.min_x = self.min_x.min(x);
        self.max_x = self.max_x.max(x);
        self.min_y = self.min_y.min(y);
        self.max_y = self.max_y.max(y);
    }

    fn include_radius(&mut self, x: f64, y: f64, r: f64) {
        self.include(x - r, y - r);
        self.include(x + r, y + r);
    }

    pub fn ellipse(&mut self, e: &ConfidenceEllipse, stroke: &str, fill: &str) {
        self.include_radius(e.center.0, e.center.1, e.semi_major.max(0.05));
        // SVG y grows downward; rotation sign flips with the mirrored axis.
        let deg = -e.orientation.to_degrees();
        self.elements.push(format!(
            "<ellipse cx=\"{}\" cy=\"{}\" rx=\"{}\" ry=\"{}\" transform=\"rotate({} {} {})\" fill=\"{}\" stroke=\"{}\" stroke-width=\"0.08\"/>",
            fmt(e.center.0),
            fmt(-e.center.1),
            fmt(e.semi_major.max(0.02)),
            fmt(e.semi_minor.max(0.02)),
            fmt(deg),
            fmt(e.center.0),
            fmt(-e.center.1),
            fill,
            stroke,
        ));
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], stroke: &str, width: f64, dashed: bool) {
        if points.len() < 2 {
            return;
        }
        for &(x, y) in points {
            self.include(x, y);
        }
        let pts: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{},{}", fmt(x), fmt(-y)))
            .collect();
        let dash = if dashed {
            " stroke-dasharray=\"0.6 0.4\""
        } else {
            ""
        };
        self.elements.push(format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\"{}/>",
            pts.join(" "),
            stroke,
            fmt(width),
            dash,
        ));
    }

    pub fn polygon(&mut self, points: &[(f64, f64)], fill: &str, stroke: &str) {
        if points.len() < 3 {
            return;
        }
        for &(x, y) in points {
            self.include(x, y);
        }
        let pts: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{},{}", fmt(x), fmt(-y)))
            .collect();
        self.elements.push(format!(
            "<polygon points=\"{}\" fill=\"{}\" stroke=\"{}\" stroke-width=\"0.05\"/>",
            pts.join(" "),
            fill,
            stroke,
        ));
    }

    pub fn marker(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        self.include_radius(x, y, r);
        self.elements.push(format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{}\"/>",
            fmt(x),
            fmt(-y),
            fmt(r),
            fill,
        ));
    }

    pub fn label(&mut self, x: f64, y: f64, size: f64, text: &str) {
        self.include(x, y);
        let escaped = text
            .replace('&', "&amp;")
            .replace('<', "&lt;")
            .replace('>', "&gt;");
        self.elements.push(format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"{}\" font-family=\"sans-serif\">{}</text>",
            fmt(x),
            fmt(-y),
            fmt(size),
            escaped,
        ));
    }

    /// Renders the document with a margin and grid lines at multiples of
    /// the grid step; every drawn element lies inside the viewBox.
    pub fn render(&self) -> String {
        let (min_x, max_x, min_y, max_y) = if self.min_x.is_finite() {
            (self.min_x, self.max_x, self.min_y, self.max_y)
        } else {
            (0.0, 1.0, 0.0, 1.0)
        };
        let margin = self.grid_step / 2.0;
        let x0 = min_x - margin;
        let y0 = min_y - margin;
        let x1 = max_x + margin;
        let y1 = max_y + margin;
        let width = x1 - x0;
        let height = y1 - y0;

        let mut grid = String::new();
        let step = self.grid_step;
        let mut gx = (x0 / step).floor() * step;
        while gx <= x1 {
            grid.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\" stroke-width=\"0.05\"/>",
                fmt(gx), fmt(-y1), fmt(gx), fmt(-y0)
            ));
            gx += step;
        }
        let mut gy = (y0 / step).floor() * step;
        while gy <= y1 {
            grid.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\" stroke-width=\"0.05\"/>",
                fmt(x0), fmt(-gy), fmt(x1), fmt(-gy)
            ));
            gy += step;
        }

        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\" width=\"{}\" height=\"{}\">\n{}{}\n</svg>\n",
            fmt(x0),
            fmt(-y1),
            fmt(width),
            fmt(height),
            fmt(width * 10.0),
            fmt(height * 10.0),
            grid,
            self.elements.join("\n"),
        )
    }
}
