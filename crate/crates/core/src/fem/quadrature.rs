//! Symmetric quadrature rules on the reference triangle.
//!
//! Points are barycentric triples; weights sum to one, so an integral over a
//! physical triangle is `area * sum(w_q * f(x_q))`.

#[derive(Debug, Clone)]
pub struct Rule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: u32,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn push_orbit3(&mut self, a: f64, w: f64) {
        let b = 1.0 - 2.0 * a;
        for p in [[a, a, b], [a, b, a], [b, a, a]] {
            self.points.push(p);
            self.weights.push(w);
        }
    }

    fn push_orbit6(&mut self, a: f64, b: f64, w: f64) {
        let c = 1.0 - a - b;
        for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
            self.points.push(p);
            self.weights.push(w);
        }
    }
}

/// 7-point rule, exact for polynomials of degree 5.
pub fn degree5() -> Rule {
    let mut r = Rule {
        points: vec![[1.0 / 3.0; 3]],
        weights: vec![0.225],
        degree: 5,
    };
    let s15 = 15f64.sqrt();
    let a1 = (6.0 - s15) / 21.0;
    let a2 = (6.0 + s15) / 21.0;
    r.push_orbit3(a1, (155.0 - s15) / 1200.0);
    r.push_orbit3(a2, (155.0 + s15) / 1200.0);
    r
}

/// 12-point rule, exact for polynomials of degree 6.
pub fn degree6() -> Rule {
    let mut r = Rule {
        points: Vec::with_capacity(12),
        weights: Vec::with_capacity(12),
        degree: 6,
    };
    r.push_orbit3(0.249_286_745_170_910_4, 0.116_786_275_726_379_4);
    r.push_orbit3(0.063_089_014_491_502_23, 0.050_844_906_370_206_82);
    r.push_orbit6(
        0.053_145_049_844_816_95,
        0.310_352_451_033_784_4,
        0.082_851_075_618_373_57,
    );
    r
}
