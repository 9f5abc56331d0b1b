@Test
public void testSetMissingPropertyTypeFromStringValue() {
    assertEquals(
            "http://wikiba.se/ontology#String",
            this.propertyRegister.setPropertyTypeFromStringValue(
                    "P10", "http://musicbrainz.org/$1/artist"));
}
