package org.example.wiki;

import static org.junit.Assert.assertEquals;

import org.junit.Test;

public class PropertyRegisterTest {

    private final PropertyRegister propertyRegister = new PropertyRegister();

    @Test
    public void testSetMissingPropertyTypeFromStringValue() {
        assertEquals(
                "http://wikiba.se/ontology#String",
                this.propertyRegister.setPropertyTypeFromStringValue(
                        "P10", "http://musicbrainz.org/$1/artist"));
    }
}
