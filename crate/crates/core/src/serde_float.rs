//! JSON has no literal for infinities or NaN; these helpers write them as
//! the strings "inf", "-inf" and "nan" and read either form back.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Repr {
    Num(f64),
    Text(String),
}

fn to_repr(x: f64) -> Repr {
    if x.is_finite() {
        Repr::Num(x)
    } else if x.is_nan() {
        Repr::Text("nan".into())
    } else if x > 0.0 {
        Repr::Text("inf".into())
    } else {
        Repr::Text("-inf".into())
    }
}

fn from_repr<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
    match r {
        Repr::Num(x) => Ok(x),
        Repr::Text(s) => match s.as_str() {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            other => Err(E::custom(format!("not a number: {other:?}"))),
        },
    }
}

pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    to_repr(*x).serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    from_repr(Repr::deserialize(d)?)
}

pub mod pair_opt {
    use super::*;

    pub fn serialize<S: Serializer>(x: &Option<(f64, f64)>, s: S) -> Result<S::Ok, S::Error> {
        x.map(|(a, b)| (to_repr(a), to_repr(b))).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<(f64, f64)>, D::Error> {
        match Option::<(Repr, Repr)>::deserialize(d)? {
            None => Ok(None),
            Some((a, b)) => Ok(Some((from_repr(a)?, from_repr(b)?))),
        }
    }
}

#[cfg(test)]
mod tests {
    #[derive(serde::Serialize, serde::Deserialize, Debug, PartialEq)]
    struct T {
        #[serde(with = "super")]
        x: f64,
        #[serde(with = "super::pair_opt")]
        p: Option<(f64, f64)>,
    }

    #[test]
    fn infinities_survive_json() {
        let t = T {
            x: f64::NEG_INFINITY,
            p: Some((1.5, f64::INFINITY)),
        };
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"x":"-inf","p":[1.5,"inf"]}"#);
        assert_eq!(serde_json::from_str::<T>(&s).unwrap(), t);
        let n: T = serde_json::from_str(r#"{"x":"nan","p":null}"#).unwrap();
        assert!(n.x.is_nan());
    }
}
