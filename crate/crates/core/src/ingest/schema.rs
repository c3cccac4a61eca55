use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValueKind {
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    GeographicalLocation,
    RichnessOfResources,
    EconomicDevelopment,
    EnvironmentalFriendliness,
    SocialDevelopment,
    CulturalFactors,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::GeographicalLocation,
        Category::RichnessOfResources,
        Category::EconomicDevelopment,
        Category::EnvironmentalFriendliness,
        Category::SocialDevelopment,
        Category::CulturalFactors,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub relation: String,
    pub kind: ValueKind,
    pub category: Category,
    /// Discrete features whose cells hold `|`-separated lists.
    pub multi_valued: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    features: Vec<FeatureDef>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureDef>) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &features {
            if !seen.insert(f.relation.as_str()) {
                return Err(Error::Schema(format!("duplicate relation {:?}", f.relation)));
            }
            if f.multi_valued && f.kind == ValueKind::Continuous {
                return Err(Error::Schema(format!(
                    "continuous feature {:?} cannot be multi-valued",
                    f.name
                )));
            }
        }
        Ok(Self { features })
    }

    /// The 29-indicator region schema: six categories, 20 continuous and
    /// 9 discrete features.
    pub fn standard() -> Self {
        use Category::*;
        use ValueKind::*;
        let rows: [(&str, &str, ValueKind, Category, bool); 29] = [
            ("Province", "Area.Province", Discrete, GeographicalLocation, false),
            ("City", "Area.City", Discrete, GeographicalLocation, false),
            ("Division", "Area.Division", Discrete, GeographicalLocation, false),
            ("Precipitation", "Area.Precipitation", Continuous, GeographicalLocation, false),
            ("Soil", "Area.Soil", Discrete, GeographicalLocation, false),
            ("Climate", "Area.Climate", Discrete, GeographicalLocation, false),
            ("Altitude", "Area.Altitude", Continuous, GeographicalLocation, false),
            ("Landform", "Area.Landform", Discrete, GeographicalLocation, false),
            ("Cultivated Area", "Area.CultivateArea", Continuous, RichnessOfResources, false),
            ("Grass Coverage", "Area.GrassCoverage", Continuous, RichnessOfResources, false),
            ("Per Capita Water Resources", "Area.WaterPer", Continuous, RichnessOfResources, false),
            ("Forest Coverage", "Area.WoodCover", Continuous, RichnessOfResources, false),
            ("Gross GDP", "Area.GDP", Continuous, EconomicDevelopment, false),
            ("GDP Per Capita", "Area.GDPPer", Continuous, EconomicDevelopment, false),
            ("Per Capita Savings of Urban Residents", "Area.UrbanSaving", Continuous, EconomicDevelopment, false),
            ("Proportion of Secondary Industry Output Value", "Area.SecondInGDP", Continuous, EconomicDevelopment, false),
            ("Proportion of Tertiary Industry Output Value", "Area.ThirdInGDP", Continuous, EconomicDevelopment, false),
            ("Environmental Quality of Surface Water", "Area.WaterQuality", Continuous, EnvironmentalFriendliness, false),
            ("Soil Erosion Modulus", "Area.SoilErosion", Continuous, EnvironmentalFriendliness, false),
            ("Number of Animal and Plant Habitats", "Area.BiologyHabitat", Continuous, EnvironmentalFriendliness, false),
            ("Proportion of Nature Reserve Area", "Area.NatureReserve", Continuous, EnvironmentalFriendliness, false),
            ("Comprehensive Risk of Natural Disasters", "Area.NatureRisk", Continuous, EnvironmentalFriendliness, false),
            ("Highway and Railway Density", "Area.HighDensity", Continuous, SocialDevelopment, false),
            ("Number of Beds in Medical and Health Institutions", "Area.BedsInMedical", Continuous, SocialDevelopment, false),
            ("Number of Tourist Attractions above AAA", "Area.AAA", Continuous, SocialDevelopment, false),
            ("Nationality Group", "Area.Nationality", Discrete, CulturalFactors, true),
            ("Dialects", "Area.Dialect", Discrete, CulturalFactors, true),
            ("Number of Intangible Cultural Heritage", "Area.NOICH", Continuous, CulturalFactors, false),
            ("Intangible Cultural Heritage Type List", "Area.ICHTL", Discrete, CulturalFactors, true),
        ];
        let features = rows
            .into_iter()
            .map(|(name, relation, kind, category, multi_valued)| FeatureDef {
                name: name.to_owned(),
                relation: relation.to_owned(),
                kind,
                category,
                multi_valued,
            })
            .collect();
        Self::new(features).expect("standard schema is valid")
    }

    pub fn features(&self) -> &[FeatureDef] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn by_name(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn by_relation(&self, relation: &str) -> Option<&FeatureDef> {
        self.features.iter().find(|f| f.relation == relation)
    }

    pub fn continuous(&self) -> impl Iterator<Item = &FeatureDef> {
        self.features.iter().filter(|f| f.kind == ValueKind::Continuous)
    }
}
